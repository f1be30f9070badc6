mod common;

use surfsplat_core::lift::{self, LiftInputs, LiftOptions};
use surfsplat_core::synth::{synth_corner, synth_plane, synth_sphere, Texture};
use surfsplat_core::{Camera, DepthMap, Error, ImageBuffer, Mat3, Vec3};

fn interior(w: u32, h: u32) -> impl Iterator<Item = (u32, u32)> {
    (1..h - 1).flat_map(move |y| (1..w - 1).map(move |x| (x, y)))
}

#[test]
fn plane_normals_and_scales_match_oracles() {
    for tilt in [0.0, 0.05, 0.1, 0.2] {
        for fx in [50.0, 100.0, 200.0] {
            let s = synth_plane(32, 32, fx, 2.0, (tilt, -0.5 * tilt), Texture::Gradient).unwrap();
            let out = lift::lift_scene_with(
                &LiftInputs::new(s.depth.clone(), s.camera.clone(), s.image.clone()),
                &LiftOptions::default(),
            )
            .unwrap();
            let p = lift::unproject_camera_frame(&s.depth, &s.camera).unwrap();
            for (x, y) in interior(32, 32) {
                let k = (y * 32 + x) as usize;
                assert!(
                    (out.normals[k] - s.gt_normals[k]).norm() < 1e-4,
                    "tilt {tilt} fx {fx}"
                );
                let (t1, t2) = common::sobel_direct(&p.positions, 32, x as usize, y as usize);
                let su = (t1.x * t1.x + t1.z * t1.z).sqrt();
                let sv = (t2.y * t2.y + t2.z * t2.z).sqrt();
                assert!((out.coarse[k].0 - su).abs() < 1e-6);
                assert!((out.coarse[k].1 - sv).abs() < 1e-6);
                let surfel = &out.scene.surfels[k];
                assert_eq!(surfel.scale, [su as f32, sv as f32]);
            }
        }
    }
}

#[test]
fn fronto_plane_is_identity_with_pixel_footprint() {
    let s = synth_plane(16, 16, 64.0, 3.0, (0.0, 0.0), Texture::Gradient).unwrap();
    let scene = lift::lift_scene(&LiftInputs::new(s.depth, s.camera, s.image)).unwrap();
    for (x, y) in interior(16, 16) {
        let sf = &scene.surfels[(y * 16 + x) as usize];
        assert!(sf.quaternion().angle() < 1e-6);
        assert!((sf.scale[0] as f64 - 3.0 / 64.0).abs() < 1e-7);
        assert!((sf.scale[1] as f64 - 3.0 / 64.0).abs() < 1e-7);
    }
}

#[test]
fn sphere_rotations_are_proper_and_follow_normals() {
    let s = synth_sphere(
        48,
        48,
        60.0,
        Vec3::new(0.1, -0.05, 4.0),
        1.2,
        Texture::Gradient,
    )
    .unwrap();
    let out = lift::lift_scene_with(
        &LiftInputs::new(s.depth.clone(), s.camera.clone(), s.image.clone()),
        &LiftOptions::default(),
    )
    .unwrap();
    assert_eq!(out.scene.len(), s.depth.valid_count());
    let mut checked = 0;
    for (i, surfel) in out.scene.surfels.iter().enumerate() {
        let r = surfel.rotation_matrix();
        assert!((r.transpose() * r - Mat3::identity()).amax() < 1e-6);
        assert!((r.determinant() - 1.0).abs() < 1e-6);
        if out.degenerate[i] {
            continue;
        }
        // Identity pose: world and camera frames coincide.
        assert!((r.column(2) - out.normals[i]).norm() < 1e-6);
        let k = out.pixels[i];
        let (x, y) = (k % 48, k / 48);
        let whole_window = (0..9).all(|d| {
            let (xx, yy) = (x as i64 + d % 3 - 1, y as i64 + d / 3 - 1);
            (0..48).contains(&xx)
                && (0..48).contains(&yy)
                && s.depth.mask()[(yy * 48 + xx) as usize]
        });
        if whole_window {
            // Finite differences of a curved surface: first order in the pixel pitch.
            assert!(out.normals[i].dot(&s.gt_normals[k]) > 0.995);
            checked += 1;
        }
    }
    assert!(checked > 400, "{checked}");
}

#[test]
fn corner_is_accurate_away_from_crease() {
    let s = synth_corner(40, 20, 40.0, 2.5, 20, 70.0, Texture::Gradient).unwrap();
    let out = lift::lift_scene_with(
        &LiftInputs::new(s.depth.clone(), s.camera.clone(), s.image.clone()),
        &LiftOptions::default(),
    )
    .unwrap();
    for (x, y) in interior(40, 20) {
        let k = (y * 40 + x) as usize;
        if !s.flagged[k] {
            assert!(
                (out.normals[k] - s.gt_normals[k]).norm() < 1e-4,
                "({x}, {y})"
            );
        }
    }
    let n = (10 * 40 + 20) as usize;
    assert!((out.normals[n] - s.gt_normals[n]).norm() > 1e-2);
}

#[test]
fn posed_camera_gives_pose_independent_geometry() {
    let s = synth_plane(24, 24, 40.0, 2.0, (0.1, 0.0), Texture::Gradient).unwrap();
    let base = lift::lift_scene(&LiftInputs::new(
        s.depth.clone(),
        s.camera.clone(),
        s.image.clone(),
    ))
    .unwrap();
    let rot = *nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 0.5).matrix();
    let t = Vec3::new(0.5, -1.0, 2.0);
    let posed = Camera::from_parts(40.0, 40.0, 12.0, 12.0, 24, 24, rot, t).unwrap();
    let moved = lift::lift_scene(&LiftInputs::new(
        s.depth.clone(),
        posed.clone(),
        s.image.clone(),
    ))
    .unwrap();
    for (a, b) in base.surfels.iter().zip(&moved.surfels) {
        // World geometry maps back to the identity-pose camera frame.
        let p = posed.to_camera(&b.position());
        assert!((p - a.position()).norm() < 1e-5);
        let r = rot * b.rotation_matrix();
        assert!((r - a.rotation_matrix()).amax() < 1e-5);
        assert_eq!(a.scale, b.scale);
    }
}

#[test]
fn multipliers_clamp_to_range() {
    let s = synth_plane(8, 8, 8.0, 1.0, (0.0, 0.0), Texture::Gradient).unwrap();
    let mut inputs = LiftInputs::new(s.depth, s.camera, s.image);
    inputs.multipliers = Some(vec![[10.0, 0.01]; 64]);
    let scene = lift::lift_scene(&inputs).unwrap();
    let sf = &scene.surfels[3 * 8 + 3];
    assert!((sf.scale[0] as f64 - 3.0 / 8.0).abs() < 1e-6);
    assert!((sf.scale[1] as f64 - 1.0 / 24.0).abs() < 1e-6);
}

#[test]
fn masked_depth_is_skipped_and_needs_support() {
    let mut valid = vec![true; 100];
    valid[55] = false;
    let d = DepthMap::with_mask(10, 10, vec![2.0; 100], valid).unwrap();
    let cam = Camera::with_identity_pose(10.0, 10.0, 5.0, 5.0, 10, 10).unwrap();
    let img = ImageBuffer::filled(10, 10, 3, 0.5);
    let out = lift::lift_scene_with(
        &LiftInputs::new(d, cam.clone(), img.clone()),
        &LiftOptions::default(),
    )
    .unwrap();
    assert_eq!(out.scene.len(), 99);
    assert!(!out.pixels.contains(&55));
    // Neighbours of the hole fall back and are flagged.
    assert!(out.degenerate_count() >= 8);

    let mut sparse = vec![false; 100];
    for k in (0..100).step_by(2) {
        sparse[k] = true;
    }
    let d = DepthMap::with_mask(10, 10, vec![2.0; 100], sparse).unwrap();
    let err = lift::lift_scene(&LiftInputs::new(d, cam, img)).unwrap_err();
    assert!(matches!(err, Error::InsufficientSupport(_)));
}
