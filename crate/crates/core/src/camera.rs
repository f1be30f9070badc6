//! Pinhole camera with a rigid world-to-camera pose.
//!
//! Camera frame: x right, y down, z forward. Pixel `(i, j)` is sampled at its
//! center `(i + 0.5, j + 0.5)`, so continuous pixel coordinates scale linearly
//! with resolution.

use crate::{Error, Mat3, Result, Vec3};
use nalgebra::Matrix4;

/// Tolerance on `RᵀR = I` and `det R = 1` accepted by [`Camera::new`].
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    rotation: Mat3,
    translation: Vec3,
    // Inverse pose, computed once at construction.
    inv_rotation: Mat3,
    center: Vec3,
}

impl Camera {
    /// Builds a camera from intrinsics and a row-major 4×4 world-to-camera
    /// transform.
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        world_to_camera: &[f64; 16],
    ) -> Result<Self> {
        let m = Matrix4::from_row_slice(world_to_camera);
        let rotation: Mat3 = m.fixed_view::<3, 3>(0, 0).into_owned();
        let translation: Vec3 = m.fixed_view::<3, 1>(0, 3).into_owned();
        Self::from_parts(fx, fy, cx, cy, width, height, rotation, translation)
    }

    /// Identity pose: camera at the world origin looking down +z.
    pub fn with_identity_pose(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        Self::from_parts(
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            Mat3::identity(),
            Vec3::zeros(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        rotation: Mat3,
        translation: Vec3,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive and finite (fx = {fx}, fy = {fy})"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidCamera("non-finite principal point".into()));
        }
        if width < 3 || height < 3 {
            return Err(Error::InvalidCamera(format!(
                "resolution {width}x{height} is below the 3x3 minimum"
            )));
        }
        if rotation
            .iter()
            .chain(translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidCamera("non-finite pose".into()));
        }
        let drift = orthonormality_error(&rotation);
        if drift > ROTATION_TOLERANCE {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {drift:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidCamera(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        let inv_rotation = rotation.transpose();
        let center = -(inv_rotation * translation);
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
            inv_rotation,
            center,
        })
    }

    /// World-to-camera rotation.
    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    /// World-to-camera translation.
    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Camera-to-world rotation.
    pub fn inverse_rotation(&self) -> &Mat3 {
        &self.inv_rotation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.center
    }

    /// Row-major 4×4 world-to-camera matrix.
    #[rustfmt::skip]
    pub fn world_to_camera(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation * world + self.translation
    }

    pub fn to_world(&self, cam: &Vec3) -> Vec3 {
        self.inv_rotation * cam + self.center
    }

    /// Unnormalized camera-frame direction `((u-cx)/fx, (v-cy)/fy, 1)`.
    #[inline]
    pub fn camera_direction(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// World-space ray through continuous pixel coordinate `(u, v)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Result<Ray> {
        if !(u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64) {
            return Err(Error::InvalidValue(format!(
                "pixel ({u}, {v}) outside {}x{} image",
                self.width, self.height
            )));
        }
        let dir = self.inv_rotation * self.camera_direction(u, v).normalize();
        Ok(Ray {
            origin: self.center,
            direction: dir.normalize(),
        })
    }

    /// Ray through the center of integer pixel `(i, j)`.
    pub fn pixel_center_ray(&self, i: u32, j: u32) -> Result<Ray> {
        self.pixel_ray(i as f64 + 0.5, j as f64 + 0.5)
    }

    /// Projects a world point to continuous pixel coordinates. `None` when
    /// the point is not in front of the camera.
    pub fn project(&self, world: &Vec3) -> Option<(f64, f64)> {
        let p = self.to_camera(world);
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Multiplies intrinsics and resolution by `k`, keeping the pose.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidScale {
                factor: k,
                reason: "must be positive and finite".into(),
            });
        }
        let dim = |n: u32| -> Result<u32> {
            let scaled = n as f64 * k;
            let rounded = scaled.round();
            if (scaled - rounded).abs() > 1e-9 * scaled.max(1.0) || rounded < 1.0 {
                return Err(Error::InvalidScale {
                    factor: k,
                    reason: format!("{n} * {k} is not a positive integer"),
                });
            }
            u32::try_from(rounded as u64).map_err(|_| Error::InvalidScale {
                factor: k,
                reason: "scaled resolution overflows".into(),
            })
        };
        let width = dim(self.width)?;
        let height = dim(self.height)?;
        Self::from_parts(
            self.fx * k,
            self.fy * k,
            self.cx * k,
            self.cy * k,
            width,
            height,
            self.rotation,
            self.translation,
        )
    }
}

/// `max |RᵀR - I|` over all entries.
pub fn orthonormality_error(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Camera {
        Camera::with_identity_pose(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    #[test]
    fn ray_through_pixel_center() {
        let ray = cam().pixel_center_ray(50, 50).unwrap();
        let expected = Vec3::new(0.005, 0.005, 1.0).normalize();
        assert!((ray.direction - expected).norm() < 1e-15);
        assert_eq!(ray.origin, Vec3::zeros());
    }

    #[test]
    fn principal_point_is_on_axis() {
        let ray = cam().pixel_ray(50.0, 50.0).unwrap();
        assert_eq!(ray.direction, Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn translated_pose_moves_origin_only() {
        // Camera at world (0,0,-5): t = -R c = (0,0,5).
        let mut m = [0.0; 16];
        m[0] = 1.0;
        m[5] = 1.0;
        m[10] = 1.0;
        m[15] = 1.0;
        m[11] = 5.0;
        let moved = Camera::new(100.0, 100.0, 50.0, 50.0, 100, 100, &m).unwrap();
        let a = moved.pixel_center_ray(50, 50).unwrap();
        let b = cam().pixel_center_ray(50, 50).unwrap();
        assert_eq!(a.origin, Vec3::new(0.0, 0.0, -5.0));
        assert_eq!(a.direction, b.direction);
    }

    #[test]
    fn out_of_range_pixel_rejected() {
        assert!(cam().pixel_ray(100.0, 10.0).is_err());
        assert!(cam().pixel_ray(-0.1, 10.0).is_err());
    }

    #[test]
    fn scaling_intrinsics() {
        let c2 = cam().scaled(2.0).unwrap();
        assert_eq!((c2.fx, c2.cx, c2.width), (200.0, 100.0, 200));
        assert_eq!(cam().scaled(1.0).unwrap(), cam());
        let c = Camera::with_identity_pose(256.0, 256.0, 128.0, 128.0, 256, 256).unwrap();
        let c4 = c.scaled(4.0).unwrap();
        assert_eq!((c4.width, c4.height), (1024, 1024));
    }

    #[test]
    fn non_integral_scale_rejected() {
        let c = Camera::with_identity_pose(10.0, 10.0, 5.0, 5.0, 15, 15).unwrap();
        assert!(matches!(c.scaled(0.5), Err(Error::InvalidScale { .. })));
        assert!(c.scaled(-1.0).is_err());
        assert!(c.scaled(2.0 / 3.0).is_ok());
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Camera::with_identity_pose(0.0, 1.0, 0.0, 0.0, 10, 10).is_err());
        assert!(Camera::with_identity_pose(1.0, 1.0, 0.0, 0.0, 2, 10).is_err());
        let mut m = [0.0; 16];
        m[0] = -1.0;
        m[5] = 1.0;
        m[10] = 1.0;
        m[15] = 1.0;
        assert!(Camera::new(1.0, 1.0, 0.0, 0.0, 10, 10, &m).is_err());
    }

    #[test]
    fn world_to_camera_round_trips() {
        let r = nalgebra::Rotation3::from_euler_angles(0.1, -0.4, 0.7);
        let c = Camera::from_parts(
            90.0,
            80.0,
            31.0,
            29.0,
            64,
            60,
            *r.matrix(),
            Vec3::new(0.3, -1.0, 2.0),
        )
        .unwrap();
        let again = Camera::new(90.0, 80.0, 31.0, 29.0, 64, 60, &c.world_to_camera()).unwrap();
        assert_eq!(c, again);
    }
}
