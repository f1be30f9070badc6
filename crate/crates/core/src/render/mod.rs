//! Tile-based CPU rasterizer for 2D Gaussian surfels.
//!
//! Per-surfel opacity is clipped at `tau_opa < 1` so every fragment along a
//! ray keeps a nonzero blend weight, and the composited color is divided by
//! the accumulated alpha wherever alpha reaches `tau_alpha`.
//!
//! Tiles are independent work units. Each tile sorts the surfels binned to
//! it by camera-frame center depth (ties by surfel index) and composites its
//! pixels sequentially, so output is bit-identical for any worker count.

mod composite;
mod splat;

pub use composite::{composite, normalize_color, Compositor};
pub use splat::{clamp_opacity, Hit};

use crate::camera::Camera;
use crate::image::ImageBuffer;
use crate::par;
use crate::surfel::{Surfel, SurfelScene};
use crate::{Error, Result, Vec3};
use splat::Splat;

/// Opacity clip used for rendering.
pub const DEFAULT_TAU_OPA: f64 = 0.6;
/// Alpha-normalization threshold for evaluation.
pub const EVAL_TAU_ALPHA: f64 = 0.001;
/// Alpha-normalization threshold for training.
pub const TRAIN_TAU_ALPHA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub tau_opa: f64,
    pub tau_alpha: f64,
    /// Gaussian support radius in standard deviations.
    pub sigma_cutoff: f64,
    /// Screen-space low-pass standard deviation in pixels; 0 disables it.
    pub lowpass_px: f64,
    pub tile_size: u32,
    pub background: [f64; 3],
    /// Stop compositing a pixel once transmittance drops below this.
    pub transmittance_floor: f64,
    /// Highest SH degree evaluated (capped by each surfel's own degree).
    pub sh_degree_used: u8,
    /// Surfels whose camera-frame center z is not beyond this are culled.
    pub znear: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            tau_opa: DEFAULT_TAU_OPA,
            tau_alpha: EVAL_TAU_ALPHA,
            sigma_cutoff: 3.0,
            lowpass_px: 0.3,
            tile_size: 16,
            background: [0.0; 3],
            transmittance_floor: 1e-4,
            sh_degree_used: crate::sh::MAX_DEGREE,
            znear: 1e-4,
        }
    }
}

impl RenderSettings {
    /// Training-regime normalization (`tau_alpha = 0.1`).
    pub fn training() -> Self {
        Self {
            tau_alpha: TRAIN_TAU_ALPHA,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidValue(msg));
        if !(self.tau_opa > 0.0 && self.tau_opa <= 1.0) {
            return bad(format!("tau_opa {} outside (0, 1]", self.tau_opa));
        }
        if !(self.tau_alpha > 0.0 && self.tau_alpha < 1.0) {
            return bad(format!("tau_alpha {} outside (0, 1)", self.tau_alpha));
        }
        if !(self.sigma_cutoff > 0.0 && self.sigma_cutoff.is_finite()) {
            return bad(format!(
                "sigma_cutoff {} must be positive",
                self.sigma_cutoff
            ));
        }
        if !(self.lowpass_px >= 0.0 && self.lowpass_px.is_finite()) {
            return bad(format!(
                "lowpass_px {} must be non-negative",
                self.lowpass_px
            ));
        }
        if self.tile_size == 0 {
            return bad("tile_size must be at least 1".into());
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return bad(format!("background {:?} outside [0, 1]", self.background));
        }
        if !(self.transmittance_floor >= 0.0 && self.transmittance_floor < 1.0) {
            return bad(format!(
                "transmittance_floor {} outside [0, 1)",
                self.transmittance_floor
            ));
        }
        if self.sh_degree_used > crate::sh::MAX_DEGREE {
            return bad(format!("sh_degree_used {}", self.sh_degree_used));
        }
        if !(self.znear > 0.0) {
            return bad(format!("znear {} must be positive", self.znear));
        }
        Ok(())
    }
}

/// One ray–surfel intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub surfel: usize,
    /// Gaussian weight in `(0, 1]`.
    pub weight: f64,
    /// Camera-frame z of the intersection.
    pub depth: f64,
    /// World-space unit view direction.
    pub view_dir: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    /// Normalized color, 3 channels.
    pub color: ImageBuffer,
    /// Accumulated alpha, 1 channel.
    pub alpha: ImageBuffer,
    /// Alpha-weighted expected depth, 0 where alpha < `tau_alpha`.
    pub depth: ImageBuffer,
}

/// Intersects the ray through pixel `(u, v)` with one surfel.
pub fn intersect_surfel(
    camera: &Camera,
    u: f64,
    v: f64,
    surfel: &Surfel,
    settings: &RenderSettings,
) -> Option<Fragment> {
    let splat = Splat::new(0, surfel, camera, settings)?;
    let dir = camera.camera_direction(u, v).normalize();
    let hit = splat.intersect(&dir, u, v, settings)?;
    Some(Fragment {
        surfel: 0,
        weight: hit.weight,
        depth: hit.depth,
        view_dir: (camera.inverse_rotation() * dir).normalize(),
    })
}

fn check_inputs(scene: &SurfelScene, camera: &Camera, settings: &RenderSettings) -> Result<()> {
    settings.validate()?;
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    if camera.width == 0 || camera.height == 0 {
        return Err(Error::InvalidCamera("zero resolution".into()));
    }
    Ok(())
}

fn prepare(scene: &SurfelScene, camera: &Camera, settings: &RenderSettings) -> Vec<Splat> {
    par::map_range(scene.len(), |i| {
        Splat::new(i, &scene.surfels[i], camera, settings)
    })
    .into_iter()
    .flatten()
    .collect()
}

#[derive(Clone, Copy)]
struct PixelResult {
    color: [f64; 3],
    alpha: f64,
    depth: f64,
}

fn finish(acc: &Compositor, settings: &RenderSettings) -> PixelResult {
    let color = normalize_color(
        acc.color,
        acc.alpha,
        settings.tau_alpha,
        settings.background,
    );
    let depth = if acc.alpha >= settings.tau_alpha {
        acc.depth / acc.alpha
    } else {
        0.0
    };
    PixelResult {
        color,
        alpha: acc.alpha,
        depth,
    }
}

struct TileGrid {
    size: u32,
    cols: u32,
    rows: u32,
}

impl TileGrid {
    fn new(camera: &Camera, size: u32) -> Self {
        Self {
            size,
            cols: camera.width.div_ceil(size),
            rows: camera.height.div_ceil(size),
        }
    }

    fn count(&self) -> usize {
        self.cols as usize * self.rows as usize
    }

    /// Inclusive tile-index range whose pixel centers may fall in `bounds`.
    fn span(&self, bounds: &[f64; 4], camera: &Camera) -> Option<(u32, u32, u32, u32)> {
        let px = |lo: f64, hi: f64, n: u32| -> Option<(u32, u32)> {
            // Pixel i is sampled at i + 0.5.
            let first = (lo - 0.5).ceil().max(0.0);
            let last = (hi - 0.5).floor().min(n as f64 - 1.0);
            (first <= last).then_some((first as u32, last as u32))
        };
        let (x0, x1) = px(bounds[0], bounds[2], camera.width)?;
        let (y0, y1) = px(bounds[1], bounds[3], camera.height)?;
        Some((
            x0 / self.size,
            y0 / self.size,
            x1 / self.size,
            y1 / self.size,
        ))
    }
}

/// Renders `scene` through `camera`.
pub fn render(
    scene: &SurfelScene,
    camera: &Camera,
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    check_inputs(scene, camera, settings)?;
    let splats = prepare(scene, camera, settings);
    let grid = TileGrid::new(camera, settings.tile_size);

    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); grid.count()];
    for (k, s) in splats.iter().enumerate() {
        if let Some((tx0, ty0, tx1, ty1)) = grid.span(&s.bounds, camera) {
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    bins[(ty * grid.cols + tx) as usize].push(k as u32);
                }
            }
        }
    }

    let needs_world_dir = splats.iter().any(|s| s.fixed_color.is_none());
    let c2w = camera.inverse_rotation();

    let tiles: Vec<Vec<PixelResult>> = par::map_range(grid.count(), |t| {
        let mut list = bins[t].clone();
        list.sort_by(|&a, &b| {
            let (sa, sb) = (&splats[a as usize], &splats[b as usize]);
            sa.center
                .z
                .total_cmp(&sb.center.z)
                .then(sa.index.cmp(&sb.index))
        });
        let tx = t as u32 % grid.cols;
        let ty = t as u32 / grid.cols;
        let x0 = tx * grid.size;
        let y0 = ty * grid.size;
        let x1 = (x0 + grid.size).min(camera.width);
        let y1 = (y0 + grid.size).min(camera.height);
        let mut out = Vec::with_capacity(((x1 - x0) * (y1 - y0)) as usize);
        for y in y0..y1 {
            for x in x0..x1 {
                let u = x as f64 + 0.5;
                let v = y as f64 + 0.5;
                let dir = camera.camera_direction(u, v).normalize();
                let dir_world = if needs_world_dir { c2w * dir } else { dir };
                let mut acc = Compositor::new();
                for &k in &list {
                    let s = &splats[k as usize];
                    if !s.covers(u, v) {
                        continue;
                    }
                    let Some(hit) = s.intersect(&dir, u, v, settings) else {
                        continue;
                    };
                    let color = s.color(&scene.surfels[s.index], &dir_world);
                    acc.add(color, s.opacity * hit.weight, hit.depth);
                    if acc.transmittance < settings.transmittance_floor {
                        break;
                    }
                }
                out.push(finish(&acc, settings));
            }
        }
        out
    });

    let (w, h) = (camera.width, camera.height);
    let mut color = ImageBuffer::filled(w, h, 3, 0.0);
    let mut alpha = ImageBuffer::filled(w, h, 1, 0.0);
    let mut depth = ImageBuffer::filled(w, h, 1, 0.0);
    for (t, pixels) in tiles.into_iter().enumerate() {
        let x0 = (t as u32 % grid.cols) * grid.size;
        let y0 = (t as u32 / grid.cols) * grid.size;
        let x1 = (x0 + grid.size).min(w);
        let mut it = pixels.into_iter();
        'rows: for y in y0.. {
            for x in x0..x1 {
                let Some(p) = it.next() else { break 'rows };
                write_pixel(&mut color, &mut alpha, &mut depth, x, y, &p);
            }
        }
    }
    Ok(RenderOutput {
        color,
        alpha,
        depth,
    })
}

fn write_pixel(
    color: &mut ImageBuffer,
    alpha: &mut ImageBuffer,
    depth: &mut ImageBuffer,
    x: u32,
    y: u32,
    p: &PixelResult,
) {
    for c in 0..3 {
        color.set(x, y, c, p.color[c as usize]);
    }
    alpha.set(x, y, 0, p.alpha);
    depth.set(x, y, 0, p.depth);
}

/// Reference renderer: every pixel intersects every surfel, fragments are
/// sorted globally by intersection depth (ties by surfel index) and all of
/// them are composited. No tiling, bounds or early termination.
pub fn render_bruteforce(
    scene: &SurfelScene,
    camera: &Camera,
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    check_inputs(scene, camera, settings)?;
    let splats = prepare(scene, camera, settings);
    let (w, h) = (camera.width, camera.height);
    let c2w = camera.inverse_rotation();
    let pixels: Vec<PixelResult> = par::map_range(w as usize * h as usize, |k| {
        let u = (k % w as usize) as f64 + 0.5;
        let v = (k / w as usize) as f64 + 0.5;
        let dir = camera.camera_direction(u, v).normalize();
        let dir_world = c2w * dir;
        let mut frags: Vec<(f64, usize, f64, [f64; 3])> = splats
            .iter()
            .filter_map(|s| {
                let hit = s.intersect(&dir, u, v, settings)?;
                let color = s.color(&scene.surfels[s.index], &dir_world);
                Some((hit.depth, s.index, s.opacity * hit.weight, color))
            })
            .collect();
        frags.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut acc = Compositor::new();
        for (d, _, a, c) in frags {
            acc.add(c, a, d);
        }
        finish(&acc, settings)
    });
    let mut color = ImageBuffer::filled(w, h, 3, 0.0);
    let mut alpha = ImageBuffer::filled(w, h, 1, 0.0);
    let mut depth = ImageBuffer::filled(w, h, 1, 0.0);
    for (k, p) in pixels.iter().enumerate() {
        let x = (k % w as usize) as u32;
        let y = (k / w as usize) as u32;
        write_pixel(&mut color, &mut alpha, &mut depth, x, y, p);
    }
    Ok(RenderOutput {
        color,
        alpha,
        depth,
    })
}
