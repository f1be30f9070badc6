//! Real spherical-harmonic color evaluation up to degree 3, using the
//! constants and sign conventions common to Gaussian-splatting pipelines.

use crate::Vec3;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_DEGREE: u8 = 3;

/// Number of coefficient triples for `degree`.
pub const fn coeff_count(degree: u8) -> usize {
    (degree as usize + 1) * (degree as usize + 1)
}

/// DC coefficient that reproduces `rgb` when all higher orders are zero.
pub fn rgb_to_dc(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|c| (c - 0.5) / SH_C0)
}

pub fn dc_to_rgb(dc: [f64; 3]) -> [f64; 3] {
    dc.map(|c| SH_C0 * c + 0.5)
}

/// Evaluates the color of `coeffs` (DC first) in unit direction `dir`,
/// truncated at `degree`. The result is offset by 0.5 and clamped below at 0.
pub fn eval(degree: u8, coeffs: &[[f32; 3]], dir: &Vec3) -> [f64; 3] {
    let degree = degree.min(MAX_DEGREE);
    let c = |k: usize, ch: usize| coeffs[k][ch] as f64;
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut out = [0.0; 3];
    for (ch, o) in out.iter_mut().enumerate() {
        let mut v = SH_C0 * c(0, ch);
        if degree >= 1 {
            v += -SH_C1 * y * c(1, ch) + SH_C1 * z * c(2, ch) - SH_C1 * x * c(3, ch);
        }
        if degree >= 2 {
            let (xx, yy, zz) = (x * x, y * y, z * z);
            v += SH_C2[0] * x * y * c(4, ch)
                + SH_C2[1] * y * z * c(5, ch)
                + SH_C2[2] * (2.0 * zz - xx - yy) * c(6, ch)
                + SH_C2[3] * x * z * c(7, ch)
                + SH_C2[4] * (xx - yy) * c(8, ch);
            if degree >= 3 {
                v += SH_C3[0] * y * (3.0 * xx - yy) * c(9, ch)
                    + SH_C3[1] * x * y * z * c(10, ch)
                    + SH_C3[2] * y * (4.0 * zz - xx - yy) * c(11, ch)
                    + SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * c(12, ch)
                    + SH_C3[4] * x * (4.0 * zz - xx - yy) * c(13, ch)
                    + SH_C3[5] * z * (xx - yy) * c(14, ch)
                    + SH_C3[6] * x * (xx - 3.0 * yy) * c(15, ch);
            }
        }
        *o = (v + 0.5).max(0.0);
    }
    out
}
