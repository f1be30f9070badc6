use crate::sh;
use crate::{Error, Mat3, Result, Vec3};
use nalgebra::{Quaternion, UnitQuaternion};
use std::collections::BTreeMap;

/// Flat 2D Gaussian primitive. The scale along the normal is identically
/// zero and is not stored.
///
/// Fields are single precision so scenes round-trip through the PLY format
/// bit-exactly; all geometry is evaluated in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Surfel {
    pub position: [f32; 3],
    /// Unit quaternion `(w, x, y, z)`.
    pub rotation: [f32; 4],
    /// Standard deviations along the two tangent axes, world units.
    pub scale: [f32; 2],
    /// Raw opacity; clipping happens at render time.
    pub opacity: f32,
    pub sh_degree: u8,
    /// `(sh_degree + 1)²` RGB triples, DC first.
    pub sh: Vec<[f32; 3]>,
}

impl Surfel {
    pub fn position(&self) -> Vec3 {
        Vec3::new(
            self.position[0] as f64,
            self.position[1] as f64,
            self.position[2] as f64,
        )
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation.map(|v| v as f64);
        UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z))
    }

    /// Columns are the tangent axes `t_u`, `t_v` and the normal.
    pub fn rotation_matrix(&self) -> Mat3 {
        self.quaternion().to_rotation_matrix().into_inner()
    }

    pub fn dc_color(&self) -> [f64; 3] {
        sh::dc_to_rgb(self.sh[0].map(|v| v as f64))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .position
            .iter()
            .chain(&self.rotation)
            .chain(&self.scale)
            .chain(std::iter::once(&self.opacity))
            .chain(self.sh.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("surfel attribute".into()));
        }
        let norm = self
            .rotation
            .iter()
            .map(|v| (*v as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidValue(format!(
                "rotation quaternion has norm {norm}"
            )));
        }
        if !(self.scale[0] > 0.0 && self.scale[1] > 0.0) {
            return Err(Error::InvalidValue(format!(
                "scales must be positive, got {:?}",
                self.scale
            )));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::InvalidValue(format!(
                "opacity {} outside [0, 1]",
                self.opacity
            )));
        }
        if self.sh_degree > sh::MAX_DEGREE {
            return Err(Error::InvalidValue(format!(
                "sh degree {} above {}",
                self.sh_degree,
                sh::MAX_DEGREE
            )));
        }
        if self.sh.len() != sh::coeff_count(self.sh_degree) {
            return Err(Error::InvalidValue(format!(
                "degree {} needs {} sh triples, got {}",
                self.sh_degree,
                sh::coeff_count(self.sh_degree),
                self.sh.len()
            )));
        }
        Ok(())
    }
}

/// Quaternion `(w, x, y, z)` in single precision, renormalized after rounding.
pub fn quaternion_to_f32(q: &UnitQuaternion<f64>) -> [f32; 4] {
    let mut out = [q.w as f32, q.i as f32, q.j as f32, q.k as f32];
    let n = out.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
    for v in &mut out {
        *v = (*v as f64 / n) as f32;
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfelScene {
    pub surfels: Vec<Surfel>,
    /// Free-form provenance (source camera, lift parameters, ...).
    pub metadata: BTreeMap<String, String>,
}

impl SurfelScene {
    pub fn new(surfels: Vec<Surfel>) -> Self {
        Self {
            surfels,
            metadata: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.surfels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfels.is_empty()
    }

    /// Common SH degree, or `None` for an empty or mixed-degree scene.
    pub fn sh_degree(&self) -> Option<u8> {
        let first = self.surfels.first()?.sh_degree;
        self.surfels
            .iter()
            .all(|s| s.sh_degree == first)
            .then_some(first)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.surfels.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::InvalidValue(format!("surfel {i}: {e}")))?;
        }
        Ok(())
    }
}
