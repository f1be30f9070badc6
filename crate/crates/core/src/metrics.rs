//! Image-fidelity metrics and high-resolution rendering consistency (HRRC)
//! evaluation: a scene is rendered at `k×` resolution and compared against
//! the bicubic-upsampled ground truth.

use crate::camera::Camera;
use crate::image::ImageBuffer;
use crate::par;
use crate::render::{render, RenderSettings};
use crate::surfel::SurfelScene;
use crate::{Error, Result};
use std::fmt;

/// PSNR reported for (near-)identical images.
pub const PSNR_CAP: f64 = 99.0;
const MSE_FLOOR: f64 = 1e-10;

/// Weight of the perceptual term in the reconstruction loss.
pub const DEFAULT_LAMBDA: f64 = 0.05;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Mean squared difference over all pixels and channels.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.check_same_shape(b)?;
    if a.data.is_empty() {
        return Err(Error::ShapeMismatch("empty image".into()));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// `10·log10(1/mse)`, capped at 99 dB.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < MSE_FLOOR {
        return PSNR_CAP;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
}

/// Normalized 1D Gaussian taps of the SSIM window.
pub fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), K1 = 0.01,
/// K2 = 0.03 and unit dynamic range, over valid (unpadded) windows only,
/// averaged over positions and channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.check_same_shape(b)?;
    let (w, h) = (a.width as usize, a.height as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ShapeMismatch(format!(
            "{w}x{h} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let kernel = ssim_kernel();
    let ch = a.channels as usize;
    let c1 = (SSIM_K1).powi(2);
    let c2 = (SSIM_K2).powi(2);
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);

    let per_channel: Vec<f64> = par::map_range(ch, |c| {
        let x: Vec<f64> = (0..w * h).map(|k| a.data[k * ch + c]).collect();
        let y: Vec<f64> = (0..w * h).map(|k| b.data[k * ch + c]).collect();
        let xx = x.iter().map(|v| v * v).collect();
        let yy = y.iter().map(|v| v * v).collect();
        let xy = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let [mx, my, sxx, syy, sxy] =
            [x, y, xx, yy, xy].map(|p: Vec<f64>| filter_valid(&p, w, h, &kernel));
        let mut sum = 0.0;
        for k in 0..ow * oh {
            let (mux, muy) = (mx[k], my[k]);
            let vx = sxx[k] - mux * mux;
            let vy = syy[k] - muy * muy;
            let cov = sxy[k] - mux * muy;
            sum += ((2.0 * mux * muy + c1) * (2.0 * cov + c2))
                / ((mux * mux + muy * muy + c1) * (vx + vy + c2));
        }
        sum / (ow * oh) as f64
    });
    Ok(per_channel.iter().sum::<f64>() / ch as f64)
}

/// Separable valid-mode filtering of a `w×h` plane.
fn filter_valid(p: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &p[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k
                .iter()
                .zip(&row[x..x + SSIM_WINDOW])
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                s += kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    out
}

/// Catmull-Rom cubic weight (`a = -0.5`) at distance `t`.
pub fn catmull_rom(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Source taps and weights for output sample `i` of a `k×` upsampling.
/// Output pixel `i` samples the source at `(i + 0.5)/k - 0.5`.
fn taps(i: usize, k: usize, n: usize) -> [(usize, f64); 4] {
    let x = (i as f64 + 0.5) / k as f64 - 0.5;
    let base = x.floor();
    let frac = x - base;
    let mut out = [(0, 0.0); 4];
    for (m, o) in out.iter_mut().enumerate() {
        let offset = m as i64 - 1;
        let idx = (base as i64 + offset).clamp(0, n as i64 - 1) as usize;
        *o = (idx, catmull_rom(frac - offset as f64));
    }
    out
}

/// Separable Catmull-Rom upsampling by an integer factor with edge clamping,
/// registered to [`Camera::scaled`]'s pixel-center convention. Output is
/// clamped to `[0, 1]`.
pub fn bicubic_upsample(img: &ImageBuffer, k: u32) -> Result<ImageBuffer> {
    if k < 2 {
        return Err(Error::InvalidScale {
            factor: k as f64,
            reason: "upsampling factor must be at least 2".into(),
        });
    }
    let (w, h, ch) = (
        img.width as usize,
        img.height as usize,
        img.channels as usize,
    );
    let k = k as usize;
    let (ow, oh) = (w * k, h * k);
    let xtaps: Vec<_> = (0..ow).map(|i| taps(i, k, w)).collect();
    let ytaps: Vec<_> = (0..oh).map(|j| taps(j, k, h)).collect();

    // Horizontal pass.
    let mut tmp = vec![0.0; ow * h * ch];
    for y in 0..h {
        for (x, t) in xtaps.iter().enumerate() {
            for c in 0..ch {
                let mut s = 0.0;
                for &(sx, wgt) in t {
                    s += wgt * img.data[(y * w + sx) * ch + c];
                }
                tmp[(y * ow + x) * ch + c] = s;
            }
        }
    }
    // Vertical pass.
    let rows: Vec<Vec<f64>> = par::map_range(oh, |y| {
        let mut row = vec![0.0; ow * ch];
        for x in 0..ow {
            for c in 0..ch {
                let mut s = 0.0;
                for &(sy, wgt) in &ytaps[y] {
                    s += wgt * tmp[(sy * ow + x) * ch + c];
                }
                row[x * ch + c] = s.clamp(0.0, 1.0);
            }
        }
        row
    });
    ImageBuffer::new(ow as u32, oh as u32, ch as u32, rows.concat())
}

/// Optional learned-perceptual metric supplied by the caller.
pub struct PerceptualHook {
    /// Recorded in reports.
    pub provider: String,
    #[allow(clippy::type_complexity)]
    func: Box<dyn Fn(&ImageBuffer, &ImageBuffer) -> std::result::Result<f64, String> + Send + Sync>,
}

impl PerceptualHook {
    pub fn new(
        provider: impl Into<String>,
        func: impl Fn(&ImageBuffer, &ImageBuffer) -> std::result::Result<f64, String>
            + Send
            + Sync
            + 'static,
    ) -> Self {
        Self {
            provider: provider.into(),
            func: Box::new(func),
        }
    }

    pub fn evaluate(&self, a: &ImageBuffer, b: &ImageBuffer) -> std::result::Result<f64, String> {
        let v = (self.func)(a, b)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("provider returned non-finite value {v}"))
        }
    }
}

impl fmt::Debug for PerceptualHook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PerceptualHook")
            .field("provider", &self.provider)
            .finish_non_exhaustive()
    }
}

pub const FLAG_PERCEPTUAL_SKIPPED: &str = "perceptual-skipped";
pub const FLAG_PERCEPTUAL_FAILED: &str = "perceptual-failed";

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub mse: f64,
    pub perceptual: Option<f64>,
    pub perceptual_skipped: bool,
}

/// `MSE + λ·perceptual`; the perceptual term is skipped (and flagged) when
/// no hook is given.
pub fn gs_loss(
    rendered: &ImageBuffer,
    gt: &ImageBuffer,
    lambda: f64,
    hook: Option<&PerceptualHook>,
) -> Result<LossValue> {
    let m = mse(rendered, gt)?;
    match hook {
        Some(h) => {
            let p = h
                .evaluate(rendered, gt)
                .map_err(|e| Error::InvalidValue(format!("perceptual provider failed: {e}")))?;
            Ok(LossValue {
                total: m + lambda * p,
                mse: m,
                perceptual: Some(p),
                perceptual_skipped: false,
            })
        }
        None => Ok(LossValue {
            total: m,
            mse: m,
            perceptual: None,
            perceptual_skipped: true,
        }),
    }
}

/// One (view, scale) evaluation, or a per-scale average when `view` is
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub view: Option<usize>,
    pub scale: u32,
    pub width: u32,
    pub height: u32,
    pub psnr: f64,
    pub ssim: f64,
    pub lpips: Option<f64>,
    pub pixels: usize,
    pub flags: Vec<String>,
}

impl MetricsRow {
    /// `Standard` at native resolution, `HRRC` otherwise.
    pub fn label(&self) -> &'static str {
        if self.scale == 1 {
            "Standard"
        } else {
            "HRRC"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    /// Per-view rows, view-major then scale order.
    pub rows: Vec<MetricsRow>,
    /// One average row per scale.
    pub averages: Vec<MetricsRow>,
    /// Perceptual provider, if any.
    pub perceptual: Option<String>,
}

impl MetricsReport {
    pub fn average(&self, scale: u32) -> Option<&MetricsRow> {
        self.averages.iter().find(|r| r.scale == scale)
    }
}

/// Renders `scene` through each target camera at each scale and scores it
/// against the bicubic-upsampled ground truth (identity at scale 1).
pub fn hrrc_eval(
    scene: &SurfelScene,
    cameras: &[Camera],
    gt_images: &[ImageBuffer],
    scales: &[u32],
    settings: &RenderSettings,
    hook: Option<&PerceptualHook>,
) -> Result<MetricsReport> {
    if cameras.len() != gt_images.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} cameras but {} ground-truth images",
            cameras.len(),
            gt_images.len()
        )));
    }
    if scales.is_empty() || scales.contains(&0) {
        return Err(Error::InvalidValue(format!(
            "invalid scale list {scales:?}"
        )));
    }
    for (i, (cam, gt)) in cameras.iter().zip(gt_images).enumerate() {
        if cam.width != gt.width || cam.height != gt.height || gt.channels != 3 {
            return Err(Error::ShapeMismatch(format!(
                "view {i}: ground truth {}x{}x{} vs camera {}x{}",
                gt.width, gt.height, gt.channels, cam.width, cam.height
            )));
        }
    }

    let mut report = MetricsReport {
        perceptual: hook.map(|h| h.provider.clone()),
        ..Default::default()
    };
    for (view, (cam, gt)) in cameras.iter().zip(gt_images).enumerate() {
        for &k in scales {
            let cam_k = cam.scaled(k as f64)?;
            let rendered = render(scene, &cam_k, settings)?.color;
            let target = if k == 1 {
                gt.clone()
            } else {
                bicubic_upsample(gt, k)?
            };
            let mut flags = Vec::new();
            let lpips = match hook {
                None => {
                    flags.push(FLAG_PERCEPTUAL_SKIPPED.to_string());
                    None
                }
                Some(h) => match h.evaluate(&rendered, &target) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        log::warn!(
                            "perceptual provider `{}` failed on view {view} scale {k}: {e}",
                            h.provider
                        );
                        flags.push(FLAG_PERCEPTUAL_FAILED.to_string());
                        None
                    }
                },
            };
            report.rows.push(MetricsRow {
                view: Some(view),
                scale: k,
                width: cam_k.width,
                height: cam_k.height,
                psnr: psnr(&rendered, &target)?,
                ssim: ssim(&rendered, &target)?,
                lpips,
                pixels: rendered.pixel_count(),
                flags,
            });
        }
    }
    for &k in scales {
        let rows: Vec<&MetricsRow> = report.rows.iter().filter(|r| r.scale == k).collect();
        let n = rows.len() as f64;
        let lpips_vals: Vec<f64> = rows.iter().filter_map(|r| r.lpips).collect();
        let mut flags: Vec<String> = rows.iter().flat_map(|r| r.flags.iter().cloned()).collect();
        flags.sort();
        flags.dedup();
        report.averages.push(MetricsRow {
            view: None,
            scale: k,
            width: rows[0].width,
            height: rows[0].height,
            psnr: rows.iter().map(|r| r.psnr).sum::<f64>() / n,
            ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
            lpips: (lpips_vals.len() == rows.len()).then(|| lpips_vals.iter().sum::<f64>() / n),
            pixels: rows.iter().map(|r| r.pixels).sum(),
            flags,
        });
    }
    Ok(report)
}
