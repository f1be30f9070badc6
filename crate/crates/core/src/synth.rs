//! Analytic test scenes: planes, spheres and two-plane creases with exact
//! depth and normals, used as oracles for lifting and rendering.
//!
//! All presets use an identity-pose camera with the principal point at the
//! image center, so camera and world frames coincide.

use crate::camera::Camera;
use crate::image::{DepthMap, ImageBuffer};
use crate::{Error, Result, Vec3};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Colors of the two checker cells.
pub const CHECKER_A: [f64; 3] = [0.85, 0.65, 0.25];
pub const CHECKER_B: [f64; 3] = [0.2, 0.35, 0.7];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    Constant([f64; 3]),
    /// Alternating square cells `period` pixels wide.
    Checker {
        period: u32,
    },
    /// Red ramps along x, green along y, blue is their mean.
    Gradient,
}

impl Texture {
    pub fn color(&self, x: u32, y: u32, width: u32, height: u32) -> [f64; 3] {
        match *self {
            Texture::Constant(c) => c,
            Texture::Checker { period } => {
                if ((x / period) + (y / period)).is_multiple_of(2) {
                    CHECKER_A
                } else {
                    CHECKER_B
                }
            }
            Texture::Gradient => {
                let r = (x as f64 + 0.5) / width as f64;
                let g = (y as f64 + 0.5) / height as f64;
                [r, g, 0.5 * (r + g)]
            }
        }
    }

    fn render(&self, width: u32, height: u32, valid: &[bool]) -> ImageBuffer {
        ImageBuffer::from_fn(width, height, 3, |x, y, c| {
            if valid[(y * width + x) as usize] {
                self.color(x, y, width, height)[c as usize]
            } else {
                0.0
            }
        })
    }
}

impl fmt::Display for Texture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Texture::Constant([r, g, b]) => write!(f, "constant:{r},{g},{b}"),
            Texture::Checker { period } => write!(f, "checker:{period}"),
            Texture::Gradient => write!(f, "gradient"),
        }
    }
}

impl FromStr for Texture {
    type Err = Error;

    /// `constant:r,g,b`, `checker:N` or `gradient`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        match name {
            "gradient" if arg.is_empty() => Ok(Texture::Gradient),
            "checker" => {
                let period: u32 = if arg.is_empty() {
                    8
                } else {
                    arg.parse()
                        .map_err(|_| Error::InvalidValue(format!("bad checker period `{arg}`")))?
                };
                if period == 0 {
                    return Err(Error::InvalidValue(
                        "checker period must be positive".into(),
                    ));
                }
                Ok(Texture::Checker { period })
            }
            "constant" => {
                let v: Vec<f64> = arg
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::InvalidValue(format!("bad constant color `{arg}`")))?;
                match v.as_slice() {
                    [r, g, b] if v.iter().all(|c| (0.0..=1.0).contains(c)) => {
                        Ok(Texture::Constant([*r, *g, *b]))
                    }
                    _ => Err(Error::InvalidValue(format!("bad constant color `{arg}`"))),
                }
            }
            _ => Err(Error::InvalidValue(format!("unknown texture `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub depth: DepthMap,
    pub camera: Camera,
    pub image: ImageBuffer,
    /// Camera-frame unit normals oriented away from the camera (`n·z > 0`
    /// on visible surfaces, matching the lift's `t1 × t2`); zero at masked
    /// pixels.
    pub gt_normals: Vec<Vec3>,
    /// Pixels where lift accuracy is not expected (crease neighbourhoods).
    pub flagged: Vec<bool>,
    pub preset: String,
    pub params: BTreeMap<String, String>,
}

impl SynthScene {
    pub fn normals_image(&self) -> ImageBuffer {
        ImageBuffer {
            width: self.depth.width,
            height: self.depth.height,
            channels: 3,
            data: self
                .gt_normals
                .iter()
                .flat_map(|n| [n.x, n.y, n.z])
                .collect(),
        }
    }
}

fn centered_camera(width: u32, height: u32, focal: f64) -> Result<Camera> {
    Camera::with_identity_pose(
        focal,
        focal,
        width as f64 / 2.0,
        height as f64 / 2.0,
        width,
        height,
    )
}

/// Unnormalized camera ray `((u-cx)/f, (v-cy)/f, 1)` through pixel `(i, j)`.
fn ray(cam: &Camera, i: u32, j: u32) -> Vec3 {
    cam.camera_direction(i as f64 + 0.5, j as f64 + 0.5)
}

/// The plane `z = depth_at_axis + tx·x + ty·y` in the camera frame.
pub fn synth_plane(
    width: u32,
    height: u32,
    focal: f64,
    depth_at_axis: f64,
    tilt: (f64, f64),
    texture: Texture,
) -> Result<SynthScene> {
    let camera = centered_camera(width, height, focal)?;
    let (tx, ty) = tilt;
    let normal = Vec3::new(-tx, -ty, 1.0).normalize();
    let mut depth = Vec::with_capacity((width * height) as usize);
    for j in 0..height {
        for i in 0..width {
            let r = ray(&camera, i, j);
            let denom = 1.0 - tx * r.x - ty * r.y;
            let z = depth_at_axis / denom;
            if !(denom > 0.0 && z > 0.0 && z.is_finite()) {
                return Err(Error::InvalidValue(format!(
                    "plane is not in front of the camera at pixel ({i}, {j})"
                )));
            }
            depth.push(z);
        }
    }
    let n = depth.len();
    let depth = DepthMap::new(width, height, depth)?;
    let image = texture.render(width, height, depth.mask());
    let mut params = BTreeMap::new();
    params.insert("size".into(), format!("{width}x{height}"));
    params.insert("focal".into(), focal.to_string());
    params.insert("depth".into(), depth_at_axis.to_string());
    params.insert("tilt".into(), format!("{tx},{ty}"));
    params.insert("texture".into(), texture.to_string());
    Ok(SynthScene {
        depth,
        camera,
        image,
        gt_normals: vec![normal; n],
        flagged: vec![false; n],
        preset: "plane".into(),
        params,
    })
}

/// Nearest ray–sphere intersection per pixel; rays that miss are masked.
pub fn synth_sphere(
    width: u32,
    height: u32,
    focal: f64,
    center: Vec3,
    radius: f64,
    texture: Texture,
) -> Result<SynthScene> {
    if !(radius > 0.0) {
        return Err(Error::InvalidValue(format!(
            "radius {radius} must be positive"
        )));
    }
    if !(center.z - radius > 0.0) {
        return Err(Error::InvalidValue(
            "sphere is behind or around the camera".into(),
        ));
    }
    let camera = centered_camera(width, height, focal)?;
    let n = (width * height) as usize;
    let mut depth = vec![0.0; n];
    let mut valid = vec![false; n];
    let mut normals = vec![Vec3::zeros(); n];
    for j in 0..height {
        for i in 0..width {
            let d = ray(&camera, i, j);
            // |t d - c|² = r²  →  (d·d) t² - 2 (d·c) t + (c·c - r²) = 0
            let a = d.dot(&d);
            let b = d.dot(&center);
            let c = center.dot(&center) - radius * radius;
            let disc = b * b - a * c;
            if disc < 0.0 {
                continue;
            }
            let t = (b - disc.sqrt()) / a;
            if t <= 0.0 {
                continue;
            }
            let k = (j * width + i) as usize;
            let hit = d * t;
            depth[k] = hit.z;
            valid[k] = true;
            normals[k] = (center - hit).normalize();
        }
    }
    let depth = DepthMap::with_mask(width, height, depth, valid)?;
    let image = texture.render(width, height, depth.mask());
    let mut params = BTreeMap::new();
    params.insert("size".into(), format!("{width}x{height}"));
    params.insert("focal".into(), focal.to_string());
    params.insert(
        "center".into(),
        format!("{},{},{}", center.x, center.y, center.z),
    );
    params.insert("radius".into(), radius.to_string());
    params.insert("texture".into(), texture.to_string());
    Ok(SynthScene {
        depth,
        camera,
        image,
        gt_normals: normals,
        flagged: vec![false; n],
        preset: "sphere".into(),
        params,
    })
}

/// Two planes meeting at a vertical ridge through the center of column
/// `crease_column` at depth `depth`. `angle` is the angle between the two
/// plane normals in degrees; each half tilts by `angle/2` away from the
/// camera. Columns within one of the crease are flagged.
pub fn synth_corner(
    width: u32,
    height: u32,
    focal: f64,
    depth: f64,
    crease_column: u32,
    angle: f64,
    texture: Texture,
) -> Result<SynthScene> {
    if !(angle > 0.0 && angle < 180.0) {
        return Err(Error::InvalidValue(format!(
            "crease angle {angle} must lie strictly between 0 and 180 degrees"
        )));
    }
    if crease_column == 0 || crease_column + 1 >= width {
        return Err(Error::InvalidValue(format!(
            "crease column {crease_column} leaves one side empty"
        )));
    }
    if !(depth > 0.0) {
        return Err(Error::InvalidValue(format!(
            "depth {depth} must be positive"
        )));
    }
    let camera = centered_camera(width, height, focal)?;
    let slope = (angle.to_radians() / 2.0).tan();
    let x_crease = ray(&camera, crease_column, 0).x * depth;
    // Left half: z = depth - slope (x - xc); right half: z = depth + slope (x - xc).
    let left_normal = Vec3::new(slope, 0.0, 1.0).normalize();
    let right_normal = Vec3::new(-slope, 0.0, 1.0).normalize();
    let n = (width * height) as usize;
    let mut values = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut flagged = Vec::with_capacity(n);
    for j in 0..height {
        for i in 0..width {
            let r = ray(&camera, i, j);
            let s = if i < crease_column { -slope } else { slope };
            // z = depth + s (z r.x - xc)  →  z (1 - s r.x) = depth - s xc
            let z = (depth - s * x_crease) / (1.0 - s * r.x);
            if !(z > 0.0 && z.is_finite() && 1.0 - s * r.x > 0.0) {
                return Err(Error::InvalidValue(format!(
                    "crease surface is not in front of the camera at pixel ({i}, {j})"
                )));
            }
            values.push(z);
            normals.push(if i < crease_column {
                left_normal
            } else {
                right_normal
            });
            flagged.push(i.abs_diff(crease_column) <= 1);
        }
    }
    let depth_map = DepthMap::new(width, height, values)?;
    let image = texture.render(width, height, depth_map.mask());
    let mut params = BTreeMap::new();
    params.insert("size".into(), format!("{width}x{height}"));
    params.insert("focal".into(), focal.to_string());
    params.insert("depth".into(), depth.to_string());
    params.insert("crease_column".into(), crease_column.to_string());
    params.insert("angle".into(), angle.to_string());
    params.insert("texture".into(), texture.to_string());
    Ok(SynthScene {
        depth: depth_map,
        camera,
        image,
        gt_normals: normals,
        flagged,
        preset: "corner".into(),
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::unproject;

    #[test]
    fn fronto_plane() {
        let s = synth_plane(16, 16, 20.0, 2.0, (0.0, 0.0), Texture::Gradient).unwrap();
        assert!(s.depth.values().iter().all(|d| *d == 2.0));
        assert!(s.gt_normals.iter().all(|n| *n == Vec3::z()));
    }

    #[test]
    fn tilted_plane_is_consistent() {
        let s = synth_plane(32, 24, 30.0, 2.0, (0.1, -0.05), Texture::Gradient).unwrap();
        let expected = Vec3::new(-0.1, 0.05, 1.0).normalize();
        assert!(s.gt_normals.iter().all(|n| (n - expected).norm() < 1e-15));
        let p = unproject(&s.depth, &s.camera).unwrap();
        for q in &p.positions {
            assert!((q.z - (2.0 + 0.1 * q.x - 0.05 * q.y)).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_behind_camera_rejected() {
        assert!(synth_plane(16, 16, 4.0, 2.0, (3.0, 0.0), Texture::Gradient).is_err());
    }

    #[test]
    fn checker_blocks() {
        let s = synth_plane(
            32,
            32,
            32.0,
            2.0,
            (0.0, 0.0),
            Texture::Checker { period: 8 },
        )
        .unwrap();
        assert_eq!(s.image.pixel(0, 0), &CHECKER_A);
        assert_eq!(s.image.pixel(7, 7), &CHECKER_A);
        assert_eq!(s.image.pixel(8, 0), &CHECKER_B);
        assert_eq!(s.image.pixel(8, 8), &CHECKER_A);
    }

    #[test]
    fn texture_parsing() {
        assert_eq!(
            "checker:8".parse::<Texture>().unwrap(),
            Texture::Checker { period: 8 }
        );
        assert_eq!("gradient".parse::<Texture>().unwrap(), Texture::Gradient);
        assert_eq!(
            "constant:0.1,0.2,0.3".parse::<Texture>().unwrap(),
            Texture::Constant([0.1, 0.2, 0.3])
        );
        assert!("checker:0".parse::<Texture>().is_err());
        assert!("plaid".parse::<Texture>().is_err());
        assert!("constant:2,0,0".parse::<Texture>().is_err());
    }

    #[test]
    fn sphere_hits_lie_on_surface() {
        let center = Vec3::new(0.0, 0.0, 5.0);
        let s = synth_sphere(32, 32, 40.0, center, 1.0, Texture::Gradient).unwrap();
        let p = unproject(&s.depth, &s.camera).unwrap();
        let mut hits = 0;
        for (k, q) in p.positions.iter().enumerate() {
            if !p.valid[k] {
                continue;
            }
            hits += 1;
            assert!(((q - center).norm() - 1.0).abs() < 1e-12);
            assert!((s.gt_normals[k] - (center - q)).norm() < 1e-12);
            assert!(s.gt_normals[k].z > 0.0);
        }
        // Silhouette radius is about f·r/sqrt(d² - r²) ≈ 8.2 px.
        assert!(hits > 180 && hits < 240, "{hits}");
        assert!(s.depth.get(0, 0).is_none());
        assert!(synth_sphere(8, 8, 8.0, Vec3::new(0.0, 0.0, 0.5), 1.0, Texture::Gradient).is_err());
    }

    #[test]
    fn corner_normals_differ_by_angle() {
        let s = synth_corner(32, 16, 32.0, 2.0, 16, 90.0, Texture::Gradient).unwrap();
        let left = s.gt_normals[0];
        let right = s.gt_normals[31];
        assert!((left.dot(&right) - 0.0).abs() < 1e-12);
        assert!(s.flagged[15] && s.flagged[16] && s.flagged[17] && !s.flagged[18]);
        assert!(synth_corner(32, 16, 32.0, 2.0, 16, 180.0, Texture::Gradient).is_err());
        assert!(synth_corner(32, 16, 32.0, 2.0, 16, 0.0, Texture::Gradient).is_err());
    }
}
