//! Depth map to surfel lifting.
//!
//! Each valid pixel becomes one surfel. Orientation and extent are not free
//! parameters: they are derived from the 3D positions of the pixel's 3×3
//! image-space neighbourhood. Horizontal and vertical Sobel responses give
//! two virtual neighbours, whose offsets from the center are the tangents
//! `t1`, `t2`. The normal is `t1 × t2`, the rotation is the minimal rotation
//! taking `(0, 0, 1)` to that normal, and the coarse scales come from the
//! tangent components, refined by clamped per-pixel multipliers.
//!
//! Tangents, normals and coarse scales are evaluated in the camera frame;
//! stored rotations are re-expressed in the world frame.

use crate::camera::Camera;
use crate::image::{DepthMap, ImageBuffer};
use crate::par;
use crate::sh;
use crate::surfel::{quaternion_to_f32, Surfel, SurfelScene};
use crate::{Error, Mat3, Result, Vec3};
use nalgebra::{Matrix2, Matrix2x3, Rotation3, UnitQuaternion};

/// Squared-norm threshold below which `t1 × t2` is treated as degenerate.
pub const DEFAULT_EPS_DEGENERATE: f64 = 1e-12;
/// Lower bound on coarse scales, world units.
pub const DEFAULT_EPS_SCALE: f64 = 1e-8;
pub const MULTIPLIER_MIN: f64 = 1.0 / 3.0;
pub const MULTIPLIER_MAX: f64 = 3.0;
/// Default `k` for the optional scale cap.
pub const DEFAULT_SCALE_CAP: f64 = 10.0;
/// Isotropic scale of ablation surfels, in pixel footprints.
pub const POINT_SURFEL_FOOTPRINT: f64 = 0.3;

const CANONICAL_NORMAL: Vec3 = Vec3::new(0.0, 0.0, 1.0);
const ANTIPARALLEL_EPS: f64 = 1e-6;

/// Per-pixel 3D positions with the depth map's validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionMap {
    pub width: u32,
    pub height: u32,
    pub positions: Vec<Vec3>,
    pub valid: Vec<bool>,
}

impl PositionMap {
    pub fn new(width: u32, height: u32, positions: Vec<Vec3>, valid: Vec<bool>) -> Result<Self> {
        let n = width as usize * height as usize;
        if positions.len() != n || valid.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} position map needs {n} entries"
            )));
        }
        Ok(Self {
            width,
            height,
            positions,
            valid,
        })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> &Vec3 {
        &self.positions[y as usize * self.width as usize + x as usize]
    }
}

/// Sobel tangents per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    pub width: u32,
    pub height: u32,
    pub t1: Vec<Vec3>,
    pub t2: Vec<Vec3>,
    /// Masked pixel in the 3×3 window, or `|t1 × t2|² < eps`.
    pub degenerate: Vec<bool>,
}

/// `p = camera_to_world(((u-cx)/fx·d, (v-cy)/fy·d, d))` at pixel centers.
pub fn unproject(depth: &DepthMap, camera: &Camera) -> Result<PositionMap> {
    let mut map = unproject_camera_frame(depth, camera)?;
    for p in &mut map.positions {
        *p = camera.to_world(p);
    }
    Ok(map)
}

/// Same as [`unproject`] but leaves positions in the camera frame.
pub fn unproject_camera_frame(depth: &DepthMap, camera: &Camera) -> Result<PositionMap> {
    if depth.width != camera.width || depth.height != camera.height {
        return Err(Error::ShapeMismatch(format!(
            "depth map {}x{} vs camera {}x{}",
            depth.width, depth.height, camera.width, camera.height
        )));
    }
    let (w, h) = (depth.width, depth.height);
    let mut positions = Vec::with_capacity(w as usize * h as usize);
    for j in 0..h {
        for i in 0..w {
            let p = match depth.get(i, j) {
                Some(d) => {
                    let u = i as f64 + 0.5;
                    let v = j as f64 + 0.5;
                    Vec3::new(
                        (u - camera.cx) / camera.fx * d,
                        (v - camera.cy) / camera.fy * d,
                        d,
                    )
                }
                None => Vec3::zeros(),
            };
            positions.push(p);
        }
    }
    PositionMap::new(w, h, positions, depth.mask().to_vec())
}

/// Horizontal and vertical Sobel responses divided by 8, with clamp-replicate
/// borders. Returns `(g_x, g_y, window_valid)`.
///
/// Masked neighbours are replaced by the center position so the gradients
/// stay finite; such pixels are reported as not window-valid.
pub fn sobel_gradients(positions: &PositionMap) -> Result<(Vec<Vec3>, Vec<Vec3>, Vec<bool>)> {
    let (w, h) = (positions.width, positions.height);
    if w < 3 || h < 3 {
        return Err(Error::InsufficientSupport(format!(
            "{w}x{h} grid is smaller than the 3x3 Sobel window"
        )));
    }
    let rows: Vec<(Vec<Vec3>, Vec<Vec3>, Vec<bool>)> = par::map_range(h as usize, |j| {
        let j = j as i64;
        let mut gx_row = Vec::with_capacity(w as usize);
        let mut gy_row = Vec::with_capacity(w as usize);
        let mut ok_row = Vec::with_capacity(w as usize);
        for i in 0..w as i64 {
            let idx = |x: i64, y: i64| -> usize {
                let x = x.clamp(0, w as i64 - 1) as usize;
                let y = y.clamp(0, h as i64 - 1) as usize;
                y * w as usize + x
            };
            let center = idx(i, j);
            let mut window_ok = positions.valid[center];
            let mut sample = |dx: i64, dy: i64| -> Vec3 {
                let k = idx(i + dx, j + dy);
                if positions.valid[k] {
                    positions.positions[k]
                } else {
                    window_ok = false;
                    positions.positions[center]
                }
            };
            let (nw, n, ne) = (sample(-1, -1), sample(0, -1), sample(1, -1));
            let (wv, ev) = (sample(-1, 0), sample(1, 0));
            let (sw, s, se) = (sample(-1, 1), sample(0, 1), sample(1, 1));
            let gx = ((ne - nw) + (ev - wv) * 2.0 + (se - sw)) / 8.0;
            let gy = ((sw - nw) + (s - n) * 2.0 + (se - ne)) / 8.0;
            gx_row.push(gx);
            gy_row.push(gy);
            ok_row.push(window_ok);
        }
        (gx_row, gy_row, ok_row)
    });
    let n = w as usize * h as usize;
    let (mut gx, mut gy, mut ok) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (a, b, c) in rows {
        gx.extend(a);
        gy.extend(b);
        ok.extend(c);
    }
    Ok((gx, gy, ok))
}

/// Virtual neighbours `p1 = p0 + g_x`, `p2 = p0 + g_y`. The output mask is
/// false wherever the 3×3 window touches a masked pixel.
pub fn sobel_virtual_neighbors(positions: &PositionMap) -> Result<(PositionMap, PositionMap)> {
    let (gx, gy, ok) = sobel_gradients(positions)?;
    let shift = |g: &[Vec3]| -> Vec<Vec3> {
        positions
            .positions
            .iter()
            .zip(g)
            .map(|(p, d)| p + d)
            .collect()
    };
    Ok((
        PositionMap::new(positions.width, positions.height, shift(&gx), ok.clone())?,
        PositionMap::new(positions.width, positions.height, shift(&gy), ok)?,
    ))
}

/// Tangents `t1 = p1 - p0`, `t2 = p2 - p0` with degeneracy flags.
pub fn tangent_field(positions: &PositionMap, eps_degenerate: f64) -> Result<TangentField> {
    let (t1, t2, ok) = sobel_gradients(positions)?;
    let degenerate = t1
        .iter()
        .zip(&t2)
        .zip(&ok)
        .map(|((a, b), ok)| !ok || a.cross(b).norm_squared() < eps_degenerate)
        .collect();
    Ok(TangentField {
        width: positions.width,
        height: positions.height,
        t1,
        t2,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("degenerate tangents: |t1 x t2|^2 = {0:e}")]
pub struct DegenerateNormal(pub f64);

/// Unit normal `(t1 × t2) / |t1 × t2|`.
pub fn surface_normal(t1: &Vec3, t2: &Vec3, eps_degenerate: f64) -> Result<Vec3, DegenerateNormal> {
    let n = t1.cross(t2);
    let sq = n.norm_squared();
    if !(sq >= eps_degenerate) || !sq.is_finite() {
        return Err(DegenerateNormal(sq));
    }
    Ok(n / sq.sqrt())
}

/// Rotation taking `(0, 0, 1)` to `n`, by Rodrigues' formula
/// `R = I + [v]× + (1 - c)/|v|² [v]×²` with `v = n₀ × n`, `c = n₀ · n`.
///
/// The exactly-aligned case is the identity. When `n` is antiparallel to
/// `n₀` (within 1e-6 on `c`) the formula is singular and the 180° rotation
/// about x is returned instead.
pub fn rotation_matrix_from_normal(n: &Vec3) -> Mat3 {
    let n = n.normalize();
    let v = CANONICAL_NORMAL.cross(&n);
    let c = CANONICAL_NORMAL.dot(&n);
    if c <= -1.0 + ANTIPARALLEL_EPS {
        return Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    }
    let v_sq = v.norm_squared();
    if v_sq == 0.0 {
        return Mat3::identity();
    }
    let vx = v.cross_matrix();
    Mat3::identity() + vx + vx * vx * ((1.0 - c) / v_sq)
}

/// Unit quaternion form of [`rotation_matrix_from_normal`].
pub fn rotation_from_normal(n: &Vec3) -> UnitQuaternion<f64> {
    if CANONICAL_NORMAL.dot(&n.normalize()) <= -1.0 + ANTIPARALLEL_EPS {
        // Exactly (0, 1, 0, 0); avoids sign ambiguity in matrix conversion.
        return UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(0.0, 1.0, 0.0, 0.0));
    }
    let r = rotation_matrix_from_normal(n);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r))
}

/// Coarse scales `σ̄u = sqrt(t1x² + t1z²)`, `σ̄v = sqrt(t2y² + t2z²)` from
/// camera-frame tangents, floored at `eps_scale`.
pub fn coarse_scales(t1: &Vec3, t2: &Vec3, eps_scale: f64) -> (f64, f64) {
    let su = (t1.x * t1.x + t1.z * t1.z).sqrt();
    let sv = (t2.y * t2.y + t2.z * t2.z).sqrt();
    (su.max(eps_scale), sv.max(eps_scale))
}

/// `σ = σ̄ · clamp(raw, 1/3, 3)` per axis.
pub fn apply_multipliers(coarse_u: f64, coarse_v: f64, raw_u: f64, raw_v: f64) -> (f64, f64) {
    (
        coarse_u * clamp_multiplier(raw_u),
        coarse_v * clamp_multiplier(raw_v),
    )
}

fn clamp_multiplier(raw: f64) -> f64 {
    if raw.is_nan() {
        return 1.0;
    }
    raw.clamp(MULTIPLIER_MIN, MULTIPLIER_MAX)
}

/// Screen-space covariance `J W R diag(σu², σv², 0) Rᵀ Wᵀ Jᵀ` of a surfel,
/// in pixels². Diagnostic only; the renderer intersects rays with the
/// surfel plane instead.
pub fn project_covariance(surfel: &Surfel, camera: &Camera) -> Result<Matrix2<f64>> {
    let mu = camera.to_camera(&surfel.position());
    if mu.z <= 0.0 {
        return Err(Error::BehindCamera(mu.z));
    }
    let r = surfel.rotation_matrix();
    let s = Mat3::from_diagonal(&Vec3::new(
        (surfel.scale[0] as f64).powi(2),
        (surfel.scale[1] as f64).powi(2),
        0.0,
    ));
    let sigma = r * s * r.transpose();
    let w = camera.rotation();
    let j = projection_jacobian(camera, &mu);
    Ok(j * w * sigma * w.transpose() * j.transpose())
}

/// Jacobian of pixel coordinates with respect to camera-frame position.
pub fn projection_jacobian(camera: &Camera, p: &Vec3) -> Matrix2x3<f64> {
    let (x, y, z) = (p.x, p.y, p.z);
    Matrix2x3::new(
        camera.fx / z,
        0.0,
        -camera.fx * x / (z * z),
        0.0,
        camera.fy / z,
        -camera.fy * y / (z * z),
    )
}

pub use crate::sh::rgb_to_dc;

/// Everything a lift needs besides the camera. Optional grids default to
/// unit multipliers, opacity 1 and zero higher-order SH.
#[derive(Debug, Clone)]
pub struct LiftInputs {
    pub depth: DepthMap,
    pub camera: Camera,
    /// Three channels in `[0, 1]`.
    pub rgb: ImageBuffer,
    /// Raw `(σ̂u, σ̂v)` per pixel, clamped to `[1/3, 3]` during lifting.
    pub multipliers: Option<Vec<[f64; 2]>>,
    pub opacities: Option<Vec<f64>>,
    /// `(sh_degree + 1)² - 1` triples per pixel, row-major.
    pub sh_rest: Option<Vec<Vec<[f64; 3]>>>,
    pub sh_degree: u8,
}

impl LiftInputs {
    pub fn new(depth: DepthMap, camera: Camera, rgb: ImageBuffer) -> Self {
        Self {
            depth,
            camera,
            rgb,
            multipliers: None,
            opacities: None,
            sh_rest: None,
            sh_degree: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.depth.width, self.depth.height);
        if self.camera.width != w || self.camera.height != h {
            return Err(Error::ShapeMismatch(format!(
                "depth {w}x{h} vs camera {}x{}",
                self.camera.width, self.camera.height
            )));
        }
        if self.rgb.width != w || self.rgb.height != h || self.rgb.channels != 3 {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{}x{} vs depth {w}x{h}x3",
                self.rgb.width, self.rgb.height, self.rgb.channels
            )));
        }
        let n = w as usize * h as usize;
        if let Some(m) = &self.multipliers {
            if m.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} multiplier pairs for {n} pixels",
                    m.len()
                )));
            }
        }
        if let Some(o) = &self.opacities {
            if o.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} opacities for {n} pixels",
                    o.len()
                )));
            }
            if let Some(bad) = o.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(Error::InvalidValue(format!("opacity {bad} outside [0, 1]")));
            }
        }
        if self.sh_degree > sh::MAX_DEGREE {
            return Err(Error::InvalidValue(format!("sh degree {}", self.sh_degree)));
        }
        if let Some(rest) = &self.sh_rest {
            let per = sh::coeff_count(self.sh_degree) - 1;
            if rest.len() != n || rest.iter().any(|r| r.len() != per) {
                return Err(Error::ShapeMismatch(format!(
                    "sh_rest must hold {per} triples for each of {n} pixels"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftOptions {
    pub eps_degenerate: f64,
    pub eps_scale: f64,
    /// Caps each scale at `k ×` the median coarse scale of its 5×5 window.
    pub scale_cap: Option<f64>,
}

impl Default for LiftOptions {
    fn default() -> Self {
        Self {
            eps_degenerate: DEFAULT_EPS_DEGENERATE,
            eps_scale: DEFAULT_EPS_SCALE,
            scale_cap: None,
        }
    }
}

/// A lifted scene plus per-surfel diagnostics (all in surfel order).
#[derive(Debug, Clone)]
pub struct LiftOutput {
    pub scene: SurfelScene,
    /// Linear pixel index of each surfel.
    pub pixels: Vec<usize>,
    /// Camera-frame unit normals (the fallback `(0,0,1)` where degenerate).
    pub normals: Vec<Vec3>,
    /// Camera-frame coarse scales before multipliers.
    pub coarse: Vec<(f64, f64)>,
    pub degenerate: Vec<bool>,
}

impl LiftOutput {
    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|d| **d).count()
    }
}

pub fn lift_scene(inputs: &LiftInputs) -> Result<SurfelScene> {
    Ok(lift_scene_with(inputs, &LiftOptions::default())?.scene)
}

pub fn lift_scene_with(inputs: &LiftInputs, options: &LiftOptions) -> Result<LiftOutput> {
    inputs.validate()?;
    check_support(&inputs.depth)?;
    let cam = &inputs.camera;
    let positions_cam = unproject_camera_frame(&inputs.depth, cam)?;
    let tangents = tangent_field(&positions_cam, options.eps_degenerate)?;
    let (w, h) = (inputs.depth.width as usize, inputs.depth.height as usize);

    let coarse: Vec<(f64, f64)> = tangents
        .t1
        .iter()
        .zip(&tangents.t2)
        .map(|(a, b)| coarse_scales(a, b, options.eps_scale))
        .collect();
    let caps = options
        .scale_cap
        .map(|k| local_median_caps(&coarse, inputs.depth.mask(), w, h, k));

    let c2w = cam.inverse_rotation();
    let valid: Vec<usize> = (0..w * h).filter(|&k| inputs.depth.mask()[k]).collect();
    let degree = inputs.sh_degree;

    let lifted: Vec<(Surfel, Vec3, bool)> = par::map_slice(&valid, |&k| {
        let degenerate = tangents.degenerate[k];
        let normal = if degenerate {
            CANONICAL_NORMAL
        } else {
            surface_normal(&tangents.t1[k], &tangents.t2[k], options.eps_degenerate)
                .unwrap_or(CANONICAL_NORMAL)
        };
        let r_world = c2w * rotation_matrix_from_normal(&normal);
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r_world));

        let (cu, cv) = coarse[k];
        let [ru, rv] = inputs.multipliers.as_ref().map_or([1.0, 1.0], |m| m[k]);
        let (mut su, mut sv) = apply_multipliers(cu, cv, ru, rv);
        if let Some(caps) = &caps {
            su = su.min(caps[k].0);
            sv = sv.min(caps[k].1);
        }

        let x = (k % w) as u32;
        let y = (k / w) as u32;
        let rgb = [
            inputs.rgb.get(x, y, 0),
            inputs.rgb.get(x, y, 1),
            inputs.rgb.get(x, y, 2),
        ];
        let mut coeffs = Vec::with_capacity(sh::coeff_count(degree));
        coeffs.push(rgb_to_dc(rgb).map(|v| v as f32));
        match &inputs.sh_rest {
            Some(rest) => coeffs.extend(rest[k].iter().map(|c| c.map(|v| v as f32))),
            None => coeffs.resize(sh::coeff_count(degree), [0.0; 3]),
        }

        let p = cam.to_world(&positions_cam.positions[k]);
        let surfel = Surfel {
            position: [p.x as f32, p.y as f32, p.z as f32],
            rotation: quaternion_to_f32(&q),
            scale: [
                (su as f32).max(f32::MIN_POSITIVE),
                (sv as f32).max(f32::MIN_POSITIVE),
            ],
            opacity: inputs.opacities.as_ref().map_or(1.0, |o| o[k] as f32),
            sh_degree: degree,
            sh: coeffs,
        };
        (surfel, normal, degenerate)
    });

    let mut scene = SurfelScene::new(Vec::with_capacity(lifted.len()));
    let mut normals = Vec::with_capacity(lifted.len());
    let mut degenerate = Vec::with_capacity(lifted.len());
    for (s, n, d) in lifted {
        scene.surfels.push(s);
        normals.push(n);
        degenerate.push(d);
    }
    scene.metadata.insert("generator".into(), "lift".into());
    scene
        .metadata
        .insert("source_resolution".into(), format!("{w}x{h}"));
    scene
        .metadata
        .insert("sh_degree".into(), degree.to_string());
    if let Some(k) = options.scale_cap {
        scene.metadata.insert("scale_cap".into(), k.to_string());
    }
    Ok(LiftOutput {
        scene,
        coarse: valid.iter().map(|&k| coarse[k]).collect(),
        pixels: valid,
        normals,
        degenerate,
    })
}

/// Point-surfel ablation: same centers, colors and opacities as a lift, but
/// identity rotations and isotropic scales of 0.3 pixel footprints, so no
/// neighbourhood information is used.
pub fn ablate_point_surfels(inputs: &LiftInputs) -> Result<SurfelScene> {
    inputs.validate()?;
    check_support(&inputs.depth)?;
    let cam = &inputs.camera;
    let positions = unproject(&inputs.depth, cam)?;
    let w = inputs.depth.width;
    let footprint = 1.0 / (cam.fx * cam.fy).sqrt();
    let degree = inputs.sh_degree;
    let mut scene = SurfelScene::default();
    for (k, p) in positions.positions.iter().enumerate() {
        if !positions.valid[k] {
            continue;
        }
        let (x, y) = (k as u32 % w, k as u32 / w);
        let d = inputs.depth.get(x, y).unwrap_or(1.0);
        let sigma = (POINT_SURFEL_FOOTPRINT * d * footprint) as f32;
        let rgb = [
            inputs.rgb.get(x, y, 0),
            inputs.rgb.get(x, y, 1),
            inputs.rgb.get(x, y, 2),
        ];
        let mut sh_coeffs = vec![rgb_to_dc(rgb).map(|v| v as f32)];
        match &inputs.sh_rest {
            Some(rest) => sh_coeffs.extend(rest[k].iter().map(|c| c.map(|v| v as f32))),
            None => sh_coeffs.resize(sh::coeff_count(degree), [0.0; 3]),
        }
        scene.surfels.push(Surfel {
            position: [p.x as f32, p.y as f32, p.z as f32],
            rotation: [1.0, 0.0, 0.0, 0.0],
            scale: [sigma.max(f32::MIN_POSITIVE); 2],
            opacity: inputs.opacities.as_ref().map_or(1.0, |o| o[k] as f32),
            sh_degree: degree,
            sh: sh_coeffs,
        });
    }
    scene
        .metadata
        .insert("generator".into(), "ablate-point-surfels".into());
    scene.metadata.insert(
        "source_resolution".into(),
        format!("{}x{}", w, inputs.depth.height),
    );
    Ok(scene)
}

fn check_support(depth: &DepthMap) -> Result<()> {
    let (w, h) = (depth.width as usize, depth.height as usize);
    let mask = depth.mask();
    let has_full_window = (1..h.saturating_sub(1)).any(|y| {
        (1..w.saturating_sub(1))
            .any(|x| (y - 1..=y + 1).all(|yy| (x - 1..=x + 1).all(|xx| mask[yy * w + xx])))
    });
    if has_full_window {
        Ok(())
    } else {
        Err(Error::InsufficientSupport(format!(
            "{} valid pixels and no fully valid 3x3 neighbourhood",
            depth.valid_count()
        )))
    }
}

/// `k ×` the median coarse scale over the valid pixels of each 5×5 window.
fn local_median_caps(
    coarse: &[(f64, f64)],
    mask: &[bool],
    w: usize,
    h: usize,
    k: f64,
) -> Vec<(f64, f64)> {
    par::map_range(w * h, |idx| {
        let (x, y) = ((idx % w) as i64, (idx / w) as i64);
        let mut us = Vec::with_capacity(25);
        let mut vs = Vec::with_capacity(25);
        for dy in -2..=2i64 {
            for dx in -2..=2i64 {
                let xx = (x + dx).clamp(0, w as i64 - 1) as usize;
                let yy = (y + dy).clamp(0, h as i64 - 1) as usize;
                let n = yy * w + xx;
                if mask[n] {
                    us.push(coarse[n].0);
                    vs.push(coarse[n].1);
                }
            }
        }
        if us.is_empty() {
            return (f64::INFINITY, f64::INFINITY);
        }
        (k * median(&mut us), k * median(&mut vs))
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(w: u32, h: u32, f: f64) -> Camera {
        Camera::with_identity_pose(f, f, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap()
    }

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn unproject_examples() {
        let c = Camera::with_identity_pose(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
        let d = DepthMap::filled(100, 100, 2.0).unwrap();
        let p = unproject(&d, &c).unwrap();
        assert!(close(p.get(50, 50), &Vec3::new(0.01, 0.01, 2.0), 1e-15));
        assert!(p.positions.iter().all(|q| q.z == 2.0));

        let c = Camera::with_identity_pose(100.0, 100.0, 50.5, 50.5, 100, 100).unwrap();
        let p = unproject(&d, &c).unwrap();
        assert_eq!(*p.get(50, 50), Vec3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn unproject_rejects_mismatch() {
        let d = DepthMap::filled(10, 10, 1.0).unwrap();
        assert!(matches!(
            unproject(&d, &cam(12, 10, 10.0)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn sobel_constant_field() {
        let map =
            PositionMap::new(4, 4, vec![Vec3::new(1.0, 2.0, 3.0); 16], vec![true; 16]).unwrap();
        let (p1, p2) = sobel_virtual_neighbors(&map).unwrap();
        assert_eq!(p1.positions, map.positions);
        assert_eq!(p2.positions, map.positions);
    }

    #[test]
    fn sobel_masked_window_flagged() {
        let mut valid = vec![true; 25];
        valid[12] = false;
        let map = PositionMap::new(5, 5, vec![Vec3::new(0.0, 0.0, 1.0); 25], valid).unwrap();
        let t = tangent_field(&map, DEFAULT_EPS_DEGENERATE).unwrap();
        assert!(t.degenerate[6] && t.degenerate[18]);
        assert!(t.degenerate[0]);
        assert!(t.t1.iter().all(|v| v.iter().all(|c| c.is_finite())));
    }

    #[test]
    fn sobel_too_small() {
        let map = PositionMap::new(2, 4, vec![Vec3::zeros(); 8], vec![true; 8]).unwrap();
        assert!(sobel_gradients(&map).is_err());
    }

    #[test]
    fn fronto_plane_tangents() {
        let c = cam(9, 9, 100.0);
        let d = DepthMap::filled(9, 9, 2.0).unwrap();
        let t = tangent_field(&unproject(&d, &c).unwrap(), DEFAULT_EPS_DEGENERATE).unwrap();
        let k = 4 * 9 + 4;
        assert!(close(&t.t1[k], &Vec3::new(0.02, 0.0, 0.0), 1e-15));
        assert!(close(&t.t2[k], &Vec3::new(0.0, 0.02, 0.0), 1e-15));
    }

    #[test]
    fn normal_examples() {
        let n = surface_normal(
            &Vec3::new(0.02, 0.0, 0.0),
            &Vec3::new(0.0, 0.02, 0.0),
            1e-12,
        )
        .unwrap();
        assert_eq!(n, Vec3::new(0.0, 0.0, 1.0));
        let n =
            surface_normal(&Vec3::new(1.0, 0.0, 0.0), &Vec3::new(0.0, 1.0, 1.0), 1e-12).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(&n, &Vec3::new(0.0, -s, s), 1e-15));
        let a = Vec3::new(1.0, 2.0, 3.0);
        assert!(surface_normal(&a, &(a * 2.0), 1e-12).is_err());
        assert!(surface_normal(&Vec3::zeros(), &a, 1e-12).is_err());
    }

    #[test]
    fn rotation_examples() {
        let q = rotation_from_normal(&Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(q.coords, nalgebra::Vector4::new(0.0, 0.0, 0.0, 1.0));

        let r = rotation_matrix_from_normal(&Vec3::new(1.0, 0.0, 0.0));
        let expected = Mat3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0);
        assert!((r - expected).amax() < 1e-15);
        assert!(close(
            &(r * CANONICAL_NORMAL),
            &Vec3::new(1.0, 0.0, 0.0),
            1e-15
        ));

        let q = rotation_from_normal(&Vec3::new(0.0, 0.0, -1.0));
        assert_eq!((q.w, q.i, q.j, q.k), (0.0, 1.0, 0.0, 0.0));
        assert!(close(
            &(q * CANONICAL_NORMAL),
            &Vec3::new(0.0, 0.0, -1.0),
            1e-15
        ));
    }

    #[test]
    fn near_antiparallel_stays_orthonormal() {
        // Just outside the fallback band Rodrigues is still well conditioned.
        for eps in [1.5e-3, 1e-2, 0.1] {
            let n = Vec3::new(eps, 0.3 * eps, -1.0).normalize();
            assert!(CANONICAL_NORMAL.dot(&n) > -1.0 + ANTIPARALLEL_EPS);
            let r = rotation_matrix_from_normal(&n);
            assert!(
                (r.transpose() * r - Mat3::identity()).amax() < 1e-9,
                "eps {eps}"
            );
            assert!(close(&(r * CANONICAL_NORMAL), &n, 1e-9));
        }
        // Inside it the fixed 180° rotation about x is returned.
        let n = Vec3::new(1e-4, 0.0, -1.0).normalize();
        assert_eq!(
            rotation_matrix_from_normal(&n),
            Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0)
        );
    }

    #[test]
    fn coarse_scale_examples() {
        let (u, v) = coarse_scales(&Vec3::new(0.02, 0.0, 0.0), &Vec3::new(0.0, 0.02, 0.0), 1e-8);
        assert_eq!((u, v), (0.02, 0.02));
        let (u, _) = coarse_scales(&Vec3::new(0.0, 1.0, 0.0), &Vec3::new(0.0, 1.0, 0.0), 1e-8);
        assert_eq!(u, 1e-8);
        let (u, _) = coarse_scales(&(Vec3::new(3.0, 0.0, 4.0) * 1e-3), &Vec3::zeros(), 1e-8);
        assert!((u - 5e-3).abs() < 1e-17);
    }

    #[test]
    fn multiplier_clamp() {
        assert_eq!(apply_multipliers(0.02, 0.02, 1.0, 1.0), (0.02, 0.02));
        let (u, v) = apply_multipliers(0.02, 0.02, 10.0, 0.1);
        assert!((u - 0.06).abs() < 1e-17);
        assert!((v - 0.02 / 3.0).abs() < 1e-17);
    }

    fn surfel_at(p: [f32; 3], q: [f32; 4], s: f32) -> Surfel {
        Surfel {
            position: p,
            rotation: q,
            scale: [s, s],
            opacity: 1.0,
            sh_degree: 0,
            sh: vec![[0.0; 3]],
        }
    }

    #[test]
    fn covariance_unit_circle() {
        let c = Camera::with_identity_pose(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
        let s = surfel_at([0.0, 0.0, 2.0], [1.0, 0.0, 0.0, 0.0], 0.02);
        let cov = project_covariance(&s, &c).unwrap();
        assert!((cov - Matrix2::identity()).amax() < 1e-6);

        let tiny = surfel_at([0.0, 0.0, 2.0], [1.0, 0.0, 0.0, 0.0], 1e-8);
        assert!(project_covariance(&tiny, &c).unwrap().amax() < 1e-9);

        let behind = surfel_at([0.0, 0.0, -1.0], [1.0, 0.0, 0.0, 0.0], 1.0);
        assert!(matches!(
            project_covariance(&behind, &c),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn covariance_edge_on_matches_finite_differences() {
        let c = Camera::with_identity_pose(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
        let h = std::f32::consts::FRAC_1_SQRT_2;
        // 90° about x: t_v points along -z/+z, i.e. along the view axis.
        let s = Surfel {
            scale: [0.02, 0.05],
            ..surfel_at([0.3, -0.2, 2.0], [h, h, 0.0, 0.0], 0.02)
        };
        let cov = project_covariance(&s, &c).unwrap();

        let mu = s.position();
        let project =
            |p: Vec3| nalgebra::Vector2::new(c.fx * p.x / p.z + c.cx, c.fy * p.y / p.z + c.cy);
        let mut j = Matrix2x3::zeros();
        let step = 1e-6;
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = step;
            let col = (project(mu + e) - project(mu - e)) / (2.0 * step);
            j.set_column(a, &col);
        }
        let r = s.rotation_matrix();
        let sig = r
            * Mat3::from_diagonal(&Vec3::new(0.02f64.powi(2), 0.05f64.powi(2), 0.0))
            * r.transpose();
        let reference = j * sig * j.transpose();
        assert!((cov - reference).amax() < 1e-6 * reference.amax());

        // On the optical axis the view-aligned tangent projects to nothing.
        let on_axis = Surfel {
            position: [0.0, 0.0, 2.0],
            ..s.clone()
        };
        let cov = project_covariance(&on_axis, &c).unwrap();
        let eig = cov.symmetric_eigenvalues();
        assert!(eig.min().abs() < 1e-6 * eig.max());
    }

    #[test]
    fn insufficient_support() {
        let c = cam(6, 6, 10.0);
        let d = DepthMap::with_mask(6, 6, vec![0.0; 36], vec![false; 36]).unwrap();
        let inputs = LiftInputs::new(d, c, ImageBuffer::filled(6, 6, 3, 0.5));
        assert!(matches!(
            lift_scene(&inputs),
            Err(Error::InsufficientSupport(_))
        ));
    }

    #[test]
    fn fronto_plane_lift() {
        let c = cam(16, 16, 100.0);
        let d = DepthMap::filled(16, 16, 2.0).unwrap();
        let inputs = LiftInputs::new(d, c, ImageBuffer::filled(16, 16, 3, 0.25));
        let out = lift_scene_with(&inputs, &LiftOptions::default()).unwrap();
        assert_eq!(out.scene.len(), 256);
        assert_eq!(out.degenerate_count(), 0);
        for (k, s) in out.scene.surfels.iter().enumerate() {
            let (x, y) = (out.pixels[k] % 16, out.pixels[k] / 16);
            if x == 0 || y == 0 || x == 15 || y == 15 {
                continue;
            }
            assert!(s.quaternion().angle() < 1e-6);
            assert!((s.scale[0] as f64 - 0.02).abs() < 1e-8);
            assert!((s.scale[1] as f64 - 0.02).abs() < 1e-8);
            assert!((s.dc_color()[0] - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn posed_camera_stores_world_rotation() {
        let rot = nalgebra::Rotation3::from_euler_angles(0.2, -0.3, 0.4);
        let c = Camera::from_parts(
            60.0,
            60.0,
            8.0,
            8.0,
            16,
            16,
            *rot.matrix(),
            Vec3::new(0.1, 0.2, 0.3),
        )
        .unwrap();
        let d = DepthMap::filled(16, 16, 3.0).unwrap();
        let inputs = LiftInputs::new(d, c.clone(), ImageBuffer::filled(16, 16, 3, 0.5));
        let out = lift_scene_with(&inputs, &LiftOptions::default()).unwrap();
        for (s, n) in out.scene.surfels.iter().zip(&out.normals) {
            let world_n = s.rotation_matrix() * CANONICAL_NORMAL;
            let cam_n = c.rotation() * world_n;
            assert!(close(&cam_n, n, 1e-6));
        }
    }

    #[test]
    fn scale_cap_limits_outliers() {
        // A depth spike produces one huge tangent; the cap bounds it.
        let c = cam(12, 12, 50.0);
        let mut v = vec![2.0; 144];
        v[6 * 12 + 6] = 20.0;
        let d = DepthMap::new(12, 12, v).unwrap();
        let mut inputs = LiftInputs::new(d, c, ImageBuffer::filled(12, 12, 3, 0.5));
        inputs.multipliers = Some(vec![[3.0, 3.0]; 144]);
        let free = lift_scene_with(&inputs, &LiftOptions::default()).unwrap();
        let capped = lift_scene_with(
            &inputs,
            &LiftOptions {
                scale_cap: Some(DEFAULT_SCALE_CAP),
                ..Default::default()
            },
        )
        .unwrap();
        let k = 6 * 12 + 5;
        assert!(capped.scene.surfels[k].scale[0] < free.scene.surfels[k].scale[0]);
        let far = 12 + 1;
        assert_eq!(
            capped.scene.surfels[far].scale,
            free.scene.surfels[far].scale
        );
    }

    #[test]
    fn ablation_scales_are_isotropic() {
        let c = cam(8, 8, 40.0);
        let d = DepthMap::filled(8, 8, 2.0).unwrap();
        let scene = ablate_point_surfels(&LiftInputs::new(d, c, ImageBuffer::filled(8, 8, 3, 0.5)))
            .unwrap();
        assert_eq!(scene.len(), 64);
        for s in &scene.surfels {
            assert_eq!(s.rotation, [1.0, 0.0, 0.0, 0.0]);
            assert_eq!(s.scale[0], s.scale[1]);
            assert!((s.scale[0] as f64 - 0.3 * 2.0 / 40.0).abs() < 1e-8);
        }
    }
}
