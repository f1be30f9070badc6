//! Depth-map to 2D Gaussian surfel lifting, a tile-based CPU surfel
//! rasterizer with forced alpha blending, and a high-resolution rendering
//! consistency evaluation harness.
//!
//! The pipeline is:
//!
//! 1. [`lift::lift_scene`] turns a depth map, camera and color image into a
//!    [`SurfelScene`], deriving each surfel's orientation and extent from
//!    the positions of its image-space neighbours.
//! 2. [`render::render`] rasterizes a scene through any camera, clipping
//!    per-surfel opacity and normalizing the composited color by alpha.
//! 3. [`metrics::hrrc_eval`] renders at `k×` resolution and scores against
//!    bicubic-upsampled ground truth.
//!
//! With the default `parallel` feature the per-pixel and per-tile loops run
//! on rayon; without it everything runs sequentially with identical output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod image;
pub mod io;
pub mod lift;
pub mod metrics;
pub mod par;
pub mod render;
pub mod sh;
pub mod surfel;
pub mod synth;

pub use camera::{Camera, Ray};
pub use error::{Error, Result};
pub use image::{DepthMap, ImageBuffer};
pub use surfel::{Surfel, SurfelScene};

/// Double-precision 3-vector used for all geometry.
pub type Vec3 = nalgebra::Vector3<f64>;
/// Double-precision 3×3 matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;
