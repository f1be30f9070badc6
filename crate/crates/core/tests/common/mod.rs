//! Independent reference implementations and random scene generators shared
//! by the integration and acceptance tests.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use surfsplat_core::render::{render_bruteforce, RenderSettings};
use surfsplat_core::sh::{self, rgb_to_dc};
use surfsplat_core::surfel::quaternion_to_f32;
use surfsplat_core::{Camera, ImageBuffer, Surfel, SurfelScene, Vec3};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform on the unit sphere (normalized Gaussian triple).
pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Catmull-Rom kernel written out piecewise, independent of the library.
pub fn cubic(t: f64) -> f64 {
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t.powi(3) - (a + 3.0) * t.powi(2) + 1.0
    } else if t < 2.0 {
        a * t.powi(3) - 5.0 * a * t.powi(2) + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Direct 2D convolution form of bicubic `k×` upsampling with edge clamp;
/// output clamped to `[0, 1]`.
pub fn bicubic_direct(img: &ImageBuffer, k: u32) -> ImageBuffer {
    let (w, h) = (img.width as i64, img.height as i64);
    ImageBuffer::from_fn(img.width * k, img.height * k, img.channels, |x, y, c| {
        let sx = (x as f64 + 0.5) / k as f64 - 0.5;
        let sy = (y as f64 + 0.5) / k as f64 - 0.5;
        let (fx, fy) = (sx.floor(), sy.floor());
        let mut acc = 0.0;
        for j in -1..=2i64 {
            for i in -1..=2i64 {
                let px = fx as i64 + i;
                let py = fy as i64 + j;
                let wgt = cubic(sx - px as f64) * cubic(sy - py as f64);
                let v = img.get(px.clamp(0, w - 1) as u32, py.clamp(0, h - 1) as u32, c);
                acc += wgt * v;
            }
        }
        acc.clamp(0.0, 1.0)
    })
}

/// Sobel tangents at interior pixel `(x, y)` by explicit 3×3 correlation
/// (kernels divided by 8).
pub fn sobel_direct(p: &[Vec3], w: usize, x: usize, y: usize) -> (Vec3, Vec3) {
    let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let mut gx = Vec3::zeros();
    let mut gy = Vec3::zeros();
    for (j, row) in kx.iter().enumerate() {
        for (i, &kxv) in row.iter().enumerate() {
            let q = p[(y + j - 1) * w + (x + i - 1)];
            // The vertical kernel is the transpose of the horizontal one.
            let kyv = kx[i][j];
            gx += q * (kxv / 8.0);
            gy += q * (kyv / 8.0);
        }
    }
    (gx, gy)
}

pub fn dc_surfel(
    position: Vec3,
    rotation: [f32; 4],
    scale: [f32; 2],
    opacity: f32,
    rgb: [f64; 3],
) -> Surfel {
    Surfel {
        position: [position.x as f32, position.y as f32, position.z as f32],
        rotation,
        scale,
        opacity,
        sh_degree: 0,
        sh: vec![rgb_to_dc(rgb).map(|v| v as f32)],
    }
}

pub fn small_camera(rng: &mut impl Rng, size: u32) -> Camera {
    let f = rng.random_range(0.8..1.5) * size as f64;
    Camera::with_identity_pose(f, f, size as f64 / 2.0, size as f64 / 2.0, size, size).unwrap()
}

/// Up to `max_surfels` surfels in disjoint depth slabs `[2·1.1^i, 2·1.1^(i+1)]`,
/// each fronto-parallel or tilted by at most 0.1 rad, with footprints of 0.5
/// to 3 px. A surfel's 3σ disk then spans at most ±3.5% of its depth, so its
/// ray hits never leave its slab and sorting by center depth and by hit
/// depth agree.
pub fn random_constrained_scene(
    rng: &mut impl Rng,
    camera: &Camera,
    max_surfels: usize,
) -> SurfelScene {
    let n = rng.random_range(1..=max_surfels);
    let ratio: f64 = 1.1;
    let mut surfels = Vec::with_capacity(n);
    for i in 0..n {
        let z = 2.0 * ratio.powf(i as f64 + 0.5);
        let u = rng.random_range(-2.0..camera.width as f64 + 2.0);
        let v = rng.random_range(-2.0..camera.height as f64 + 2.0);
        let p = Vec3::new(
            (u - camera.cx) / camera.fx * z,
            (v - camera.cy) / camera.fy * z,
            z,
        );
        let px = z / camera.fx;
        let su = rng.random_range(0.5..3.0) * px;
        let sv = rng.random_range(0.5..3.0) * px;
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            0.0,
        );
        let q = if rng.random_bool(0.5) && axis.norm() > 1e-3 {
            let angle = rng.random_range(0.0..0.1);
            nalgebra::UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
        } else {
            nalgebra::UnitQuaternion::identity()
        };
        let degree = rng.random_range(0..=1u8);
        let mut sh_coeffs =
            vec![rgb_to_dc([rng.random(), rng.random(), rng.random()]).map(|v| v as f32)];
        for _ in 1..sh::coeff_count(degree) {
            sh_coeffs.push([0; 3].map(|_| rng.random_range(-0.3..0.3f32)));
        }
        surfels.push(Surfel {
            position: [p.x as f32, p.y as f32, p.z as f32],
            rotation: quaternion_to_f32(&q),
            scale: [su as f32, sv as f32],
            opacity: rng.random_range(0.05..1.0),
            sh_degree: degree,
            sh: sh_coeffs,
        });
    }
    // Shuffle so index order and depth order disagree.
    for i in (1..surfels.len()).rev() {
        let j = rng.random_range(0..=i);
        surfels.swap(i, j);
    }
    SurfelScene::new(surfels)
}

/// Draws constrained scenes until one never drives transmittance below the
/// early-termination floor, so tiled and brute-force compositing consume the
/// same fragments.
pub fn oracle_scene(rng: &mut impl Rng, camera: &Camera, settings: &RenderSettings) -> SurfelScene {
    loop {
        let scene = random_constrained_scene(rng, camera, 64);
        let reference = render_bruteforce(&scene, camera, settings).unwrap();
        let max_alpha = reference.alpha.data.iter().cloned().fold(0.0, f64::max);
        if 1.0 - max_alpha >= settings.transmittance_floor * 1.0001 {
            return scene;
        }
    }
}

pub fn max_abs_diff(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    assert!(a.width == b.width && a.height == b.height && a.channels == b.channels);
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
