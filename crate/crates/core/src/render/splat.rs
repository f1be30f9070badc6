//! Camera-frame surfel preprocessing and exact ray–surfel intersection.

use super::RenderSettings;
use crate::camera::Camera;
use crate::sh;
use crate::surfel::Surfel;
use crate::Vec3;

const PARALLEL_EPS: f64 = 1e-12;
/// Extra pixels added around every screen bound to absorb rounding.
const BOUND_MARGIN_PX: f64 = 1.0;

/// A surfel transformed into the camera frame with render-time opacity.
#[derive(Debug, Clone)]
pub(crate) struct Splat {
    pub index: usize,
    pub center: Vec3,
    pub tu: Vec3,
    pub tv: Vec3,
    pub normal: Vec3,
    pub inv_su: f64,
    pub inv_sv: f64,
    /// Opacity after clipping at `tau_opa`.
    pub opacity: f64,
    /// Projected center in pixels.
    pub screen: (f64, f64),
    /// Conservative pixel-space bound `[xmin, ymin, xmax, ymax]`.
    pub bounds: [f64; 4],
    /// Color when it does not depend on view direction.
    pub fixed_color: Option<[f64; 3]>,
    pub color_degree: u8,
}

/// Result of a successful intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Gaussian weight in `(0, 1]`.
    pub weight: f64,
    /// Camera-frame z of the fragment.
    pub depth: f64,
}

impl Splat {
    /// `None` when the center is not beyond `znear`.
    pub fn new(
        index: usize,
        surfel: &Surfel,
        camera: &Camera,
        settings: &RenderSettings,
    ) -> Option<Self> {
        let center = camera.to_camera(&surfel.position());
        if !(center.z > settings.znear) {
            return None;
        }
        let r = camera.rotation() * surfel.rotation_matrix();
        let tu: Vec3 = r.column(0).into_owned();
        let tv: Vec3 = r.column(1).into_owned();
        let normal: Vec3 = r.column(2).into_owned();
        let su = surfel.scale[0] as f64;
        let sv = surfel.scale[1] as f64;
        let screen = (
            camera.fx * center.x / center.z + camera.cx,
            camera.fy * center.y / center.z + camera.cy,
        );

        let color_degree = surfel.sh_degree.min(settings.sh_degree_used);
        let fixed_color = (color_degree == 0).then(|| sh::eval(0, &surfel.sh, &Vec3::z()));

        let bounds = screen_bounds(camera, settings, &center, &(tu * su), &(tv * sv), screen);
        Some(Self {
            index,
            center,
            tu,
            tv,
            normal,
            inv_su: 1.0 / su,
            inv_sv: 1.0 / sv,
            opacity: clamp_opacity(surfel.opacity as f64, settings.tau_opa),
            screen,
            bounds,
            fixed_color,
            color_degree,
        })
    }

    #[inline]
    pub fn covers(&self, u: f64, v: f64) -> bool {
        u >= self.bounds[0] && u <= self.bounds[2] && v >= self.bounds[1] && v <= self.bounds[3]
    }

    /// Intersects the camera-frame unit ray `dir` through pixel `(u, v)`.
    ///
    /// The object-space weight is `exp(-(a² + b²)/2)` at the ray–plane hit.
    /// Within `sigma_cutoff · lowpass_px` pixels of the projected center a
    /// screen-space weight `exp(-Δ²/(2·lowpass²))` is also evaluated and the
    /// larger of the two is used, which keeps edge-on and sub-pixel surfels
    /// from falling between samples. Fragments carried by the screen-space
    /// term take the center depth.
    #[inline]
    pub fn intersect(&self, dir: &Vec3, u: f64, v: f64, settings: &RenderSettings) -> Option<Hit> {
        let cutoff_sq = settings.sigma_cutoff * settings.sigma_cutoff;
        let lowpass = if settings.lowpass_px > 0.0 {
            let du = u - self.screen.0;
            let dv = v - self.screen.1;
            let d2 = du * du + dv * dv;
            let reach = settings.sigma_cutoff * settings.lowpass_px;
            (d2 <= reach * reach)
                .then(|| (-d2 / (2.0 * settings.lowpass_px * settings.lowpass_px)).exp())
        } else {
            None
        };

        let denom = self.normal.dot(dir);
        let object = if denom.abs() >= PARALLEL_EPS {
            let t = self.normal.dot(&self.center) / denom;
            if t > 0.0 {
                let x = dir * t;
                let off = x - self.center;
                let a = self.tu.dot(&off) * self.inv_su;
                let b = self.tv.dot(&off) * self.inv_sv;
                let rho = a * a + b * b;
                (rho <= cutoff_sq).then(|| ((-0.5 * rho).exp(), x.z))
            } else {
                None
            }
        } else {
            None
        };

        match (object, lowpass) {
            (Some((g, _)), Some(g_lp)) if g_lp > g => Some(Hit {
                weight: g_lp,
                depth: self.center.z,
            }),
            (Some((g, z)), _) => Some(Hit {
                weight: g,
                depth: z,
            }),
            (None, Some(g_lp)) => Some(Hit {
                weight: g_lp,
                depth: self.center.z,
            }),
            (None, None) => None,
        }
        .filter(|h| h.weight > 0.0 && h.depth > 0.0)
    }

    /// Color seen along world-space unit direction `dir_world`.
    #[inline]
    pub fn color(&self, surfel: &Surfel, dir_world: &Vec3) -> [f64; 3] {
        match self.fixed_color {
            Some(c) => c,
            None => sh::eval(self.color_degree, &surfel.sh, dir_world),
        }
    }
}

/// `min(alpha, tau_opa)`.
#[inline]
pub fn clamp_opacity(alpha: f64, tau_opa: f64) -> f64 {
    alpha.min(tau_opa)
}

/// Pixel-space AABB of the projected `sigma_cutoff` square around the
/// surfel, which contains the projected disk. Unbounded (whole screen) if
/// any corner is not in front of `znear`.
fn screen_bounds(
    camera: &Camera,
    settings: &RenderSettings,
    center: &Vec3,
    axis_u: &Vec3,
    axis_v: &Vec3,
    screen: (f64, f64),
) -> [f64; 4] {
    let c = settings.sigma_cutoff;
    let mut b = [screen.0, screen.1, screen.0, screen.1];
    for (su, sv) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        let p = center + axis_u * (c * su) + axis_v * (c * sv);
        if !(p.z > settings.znear) {
            return [
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
                f64::INFINITY,
                f64::INFINITY,
            ];
        }
        let x = camera.fx * p.x / p.z + camera.cx;
        let y = camera.fy * p.y / p.z + camera.cy;
        b[0] = b[0].min(x);
        b[1] = b[1].min(y);
        b[2] = b[2].max(x);
        b[3] = b[3].max(y);
    }
    let pad = settings.sigma_cutoff * settings.lowpass_px + BOUND_MARGIN_PX;
    [b[0] - pad, b[1] - pad, b[2] + pad, b[3] + pad]
}
