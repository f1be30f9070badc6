//! JSON camera descriptors:
//!
//! ```json
//! { "fx": 64.0, "fy": 64.0, "cx": 32.0, "cy": 32.0, "width": 64, "height": 64,
//!   "world_to_camera": [1, 0, 0, 0,  0, 1, 0, 0,  0, 0, 1, 0,  0, 0, 0, 1] }
//! ```
//!
//! `world_to_camera` is row-major. Rotations that drift from orthonormal by
//! at most [`RENORMALIZE_TOLERANCE`] are projected back onto SO(3) with a
//! warning; larger drift and reflections are rejected.

use super::{open, write_bytes};
use crate::camera::{orthonormality_error, Camera, ROTATION_TOLERANCE};
use crate::{Error, Mat3, Result, Vec3};
use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

pub const RENORMALIZE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDescriptor {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub world_to_camera: [f64; 16],
}

impl From<&Camera> for CameraDescriptor {
    fn from(c: &Camera) -> Self {
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            world_to_camera: c.world_to_camera(),
        }
    }
}

pub fn camera_to_json(camera: &Camera) -> String {
    let mut s = serde_json::to_string_pretty(&CameraDescriptor::from(camera))
        .expect("camera descriptors always serialize");
    s.push('\n');
    s
}

/// Parses a descriptor. The second value is the orthonormality drift when
/// the rotation had to be renormalized.
pub fn camera_from_json(text: &str) -> Result<(Camera, Option<f64>)> {
    let d: CameraDescriptor = serde_json::from_str(text)
        .map_err(|e| Error::MalformedHeader(format!("camera descriptor: {e}")))?;
    let m = Matrix4::from_row_slice(&d.world_to_camera);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCamera("non-finite pose".into()));
    }
    let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
    if bottom != [0.0, 0.0, 0.0, 1.0] {
        return Err(Error::InvalidCamera(format!(
            "last row of world_to_camera must be 0 0 0 1, got {bottom:?}"
        )));
    }
    let mut rotation: Mat3 = m.fixed_view::<3, 3>(0, 0).into_owned();
    let translation: Vec3 = m.fixed_view::<3, 1>(0, 3).into_owned();
    if rotation.determinant() <= 0.0 {
        return Err(Error::InvalidCamera(format!(
            "rotation determinant {} is not positive",
            rotation.determinant()
        )));
    }
    let drift = orthonormality_error(&rotation);
    let mut renormalized = None;
    if drift > ROTATION_TOLERANCE {
        if drift > RENORMALIZE_TOLERANCE {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {drift:e}, limit {RENORMALIZE_TOLERANCE:e})"
            )));
        }
        // Nearest rotation in the Frobenius norm: U Vᵀ from the SVD.
        let svd = rotation.svd(true, true);
        rotation = svd.u.unwrap() * svd.v_t.unwrap();
        log::warn!("camera rotation drifted by {drift:e}; renormalized");
        renormalized = Some(drift);
    }
    let camera = Camera::from_parts(
        d.fx,
        d.fy,
        d.cx,
        d.cy,
        d.width,
        d.height,
        rotation,
        translation,
    )?;
    Ok((camera, renormalized))
}

pub fn write_camera(path: &Path, camera: &Camera) -> Result<()> {
    write_bytes(path, camera_to_json(camera).as_bytes(), true)
}

/// Like [`read_camera`], also returning the drift of a renormalized rotation.
pub fn read_camera_checked(path: &Path) -> Result<(Camera, Option<f64>)> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| Error::file(path, e))?;
    camera_from_json(&text)
}

pub fn read_camera(path: &Path) -> Result<Camera> {
    read_camera_checked(path).map(|(c, _)| c)
}
