//! Binary little-endian PLY scenes.
//!
//! ```text
//! ply
//! format binary_little_endian 1.0
//! comment surfsplat format_version 1 sh_degree 0
//! comment meta source=lift
//! element vertex 4096
//! property float x
//! ...
//! end_header
//! ```
//!
//! Properties, all `float`: `x y z rot_0..rot_3 scale_u scale_v opacity
//! f_dc_0..2 f_rest_*`. `f_rest` is channel-major: all red coefficients of
//! degree ≥ 1, then green, then blue.

use super::{open, write_bytes};
use crate::sh;
use crate::surfel::{Surfel, SurfelScene};
use crate::{Error, Result};
use std::io::Read;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC_COMMENT: &str = "comment surfsplat";
const META_COMMENT: &str = "comment meta ";
const BASE_PROPERTIES: [&str; 13] = [
    "x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3", "scale_u", "scale_v", "opacity", "f_dc_0",
    "f_dc_1", "f_dc_2",
];
// Headers beyond this are certainly not ours.
const MAX_HEADER_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneFileHeader {
    pub format_version: u32,
    pub count: usize,
    pub sh_degree: u8,
    /// Property names in file order.
    pub properties: Vec<String>,
    pub metadata: Vec<(String, String)>,
}

impl SceneFileHeader {
    fn stride(&self) -> usize {
        self.properties.len() * 4
    }
}

pub fn property_names(sh_degree: u8) -> Vec<String> {
    let rest = 3 * (sh::coeff_count(sh_degree) - 1);
    BASE_PROPERTIES
        .iter()
        .map(|s| s.to_string())
        .chain((0..rest).map(|i| format!("f_rest_{i}")))
        .collect()
}

fn degree_for_rest(rest: usize) -> Option<u8> {
    (0..=sh::MAX_DEGREE).find(|&d| 3 * (sh::coeff_count(d) - 1) == rest)
}

pub fn encode_scene(scene: &SurfelScene) -> Result<Vec<u8>> {
    scene.validate()?;
    let degree = if scene.is_empty() {
        0
    } else {
        scene.sh_degree().ok_or_else(|| {
            Error::Unsupported("scenes with mixed SH degrees cannot be written".into())
        })?
    };
    let props = property_names(degree);
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!(
        "{MAGIC_COMMENT} format_version {FORMAT_VERSION} sh_degree {degree}\n"
    ));
    for (k, v) in &scene.metadata {
        if k.is_empty()
            || k.contains(|c: char| c == '=' || c.is_whitespace())
            || v.contains(['\n', '\r'])
        {
            return Err(Error::InvalidValue(format!(
                "metadata entry `{k}` cannot be stored in a PLY header"
            )));
        }
        header.push_str(&format!("{META_COMMENT}{k}={v}\n"));
    }
    header.push_str(&format!("element vertex {}\n", scene.len()));
    for p in &props {
        header.push_str(&format!("property float {p}\n"));
    }
    header.push_str("end_header\n");

    let coeffs = sh::coeff_count(degree);
    let mut out = Vec::with_capacity(header.len() + scene.len() * props.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for s in &scene.surfels {
        let mut push = |v: f32| out.extend_from_slice(&v.to_le_bytes());
        s.position.iter().for_each(|&v| push(v));
        s.rotation.iter().for_each(|&v| push(v));
        s.scale.iter().for_each(|&v| push(v));
        push(s.opacity);
        s.sh[0].iter().for_each(|&v| push(v));
        for c in 0..3 {
            for k in 1..coeffs {
                push(s.sh[k][c]);
            }
        }
    }
    Ok(out)
}

pub fn write_scene(path: &Path, scene: &SurfelScene) -> Result<()> {
    write_bytes(path, &encode_scene(scene)?, true)
}

fn parse_header(text: &str) -> Result<SceneFileHeader> {
    let mut lines = text.lines();
    if lines.next() != Some("ply") {
        return Err(Error::BadMagic("PLY files start with `ply`".into()));
    }
    let mut version = None;
    let mut declared_degree = None;
    let mut count = None;
    let mut properties = Vec::new();
    let mut metadata = Vec::new();
    let mut format_seen = false;
    for line in lines {
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") => {
                let fmt: Vec<&str> = words.collect();
                if fmt != ["binary_little_endian", "1.0"] {
                    return Err(Error::Unsupported(format!(
                        "PLY format `{}`",
                        fmt.join(" ")
                    )));
                }
                format_seen = true;
            }
            Some("comment") => {
                if let Some(kv) = line.strip_prefix(META_COMMENT) {
                    let (k, v) = kv.split_once('=').ok_or_else(|| {
                        Error::MalformedHeader(format!("bad metadata line `{line}`"))
                    })?;
                    metadata.push((k.to_string(), v.to_string()));
                } else if let Some(rest) = line.strip_prefix(MAGIC_COMMENT) {
                    let rest: Vec<&str> = rest.split_whitespace().collect();
                    for pair in rest.chunks(2) {
                        match pair {
                            ["format_version", v] => {
                                version = Some(v.parse::<u32>().map_err(|_| {
                                    Error::MalformedHeader(format!("bad format version `{v}`"))
                                })?)
                            }
                            ["sh_degree", v] => {
                                declared_degree = Some(v.parse::<u8>().map_err(|_| {
                                    Error::MalformedHeader(format!("bad sh_degree `{v}`"))
                                })?)
                            }
                            _ => {
                                return Err(Error::MalformedHeader(format!(
                                    "unrecognized comment `{line}`"
                                )))
                            }
                        }
                    }
                }
            }
            Some("element") => {
                let name = words.next();
                let n = words.next();
                if name != Some("vertex") || count.is_some() {
                    return Err(Error::MalformedHeader(format!(
                        "expected a single `element vertex`, got `{line}`"
                    )));
                }
                count =
                    Some(n.and_then(|n| n.parse::<usize>().ok()).ok_or_else(|| {
                        Error::MalformedHeader(format!("bad element line `{line}`"))
                    })?);
            }
            Some("property") => {
                if count.is_none() {
                    return Err(Error::MalformedHeader("property before element".into()));
                }
                let ty = words.next();
                let name = words
                    .next()
                    .ok_or_else(|| Error::MalformedHeader(format!("bad property line `{line}`")))?;
                if !matches!(ty, Some("float") | Some("float32")) {
                    return Err(Error::Unsupported(format!(
                        "property `{name}` has type `{}`; only float is supported",
                        ty.unwrap_or("")
                    )));
                }
                properties.push(name.to_string());
            }
            Some("obj_info") | None => {}
            Some(other) => {
                return Err(Error::MalformedHeader(format!(
                    "unexpected header keyword `{other}`"
                )))
            }
        }
    }
    if !format_seen {
        return Err(Error::MalformedHeader("missing format line".into()));
    }
    let count = count.ok_or_else(|| Error::MalformedHeader("missing `element vertex`".into()))?;
    let format_version = version.unwrap_or(FORMAT_VERSION);
    if format_version != FORMAT_VERSION {
        return Err(Error::Unsupported(format!(
            "scene format version {format_version}"
        )));
    }

    for (i, name) in properties.iter().enumerate() {
        let known = BASE_PROPERTIES.get(i).is_some_and(|b| b == name)
            || (i >= BASE_PROPERTIES.len()
                && *name == format!("f_rest_{}", i - BASE_PROPERTIES.len()));
        if !known {
            return Err(Error::UnknownProperty(name.clone()));
        }
    }
    if properties.len() < BASE_PROPERTIES.len() {
        return Err(Error::MalformedHeader(format!(
            "missing property `{}`",
            BASE_PROPERTIES[properties.len()]
        )));
    }
    let rest = properties.len() - BASE_PROPERTIES.len();
    let sh_degree = degree_for_rest(rest).ok_or_else(|| {
        Error::MalformedHeader(format!("{rest} f_rest properties match no SH degree"))
    })?;
    if let Some(d) = declared_degree {
        if d != sh_degree {
            return Err(Error::MalformedHeader(format!(
                "sh_degree {d} declared but properties imply {sh_degree}"
            )));
        }
    }
    Ok(SceneFileHeader {
        format_version,
        count,
        sh_degree,
        properties,
        metadata,
    })
}

fn split_header(bytes: &[u8]) -> Result<(SceneFileHeader, &[u8])> {
    const END: &[u8] = b"end_header\n";
    let limit = bytes.len().min(MAX_HEADER_BYTES);
    let end = bytes[..limit]
        .windows(END.len())
        .position(|w| w == END)
        .filter(|&p| p == 0 || bytes[p - 1] == b'\n')
        .ok_or_else(|| {
            if bytes.starts_with(b"ply") {
                Error::MalformedHeader("missing `end_header`".into())
            } else {
                Error::BadMagic("PLY files start with `ply`".into())
            }
        })?;
    let text = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::MalformedHeader("header is not valid text".into()))?;
    Ok((parse_header(text)?, &bytes[end + END.len()..]))
}

pub fn decode_scene(bytes: &[u8]) -> Result<SurfelScene> {
    let (header, body) = split_header(bytes)?;
    let stride = header.stride();
    let expected = header
        .count
        .checked_mul(stride)
        .ok_or_else(|| Error::MalformedHeader("vertex count overflows".into()))?;
    if body.len() != expected {
        return Err(Error::CountMismatch(format!(
            "header declares {} surfels ({expected} bytes) but the body holds {} bytes",
            header.count,
            body.len()
        )));
    }
    let coeffs = sh::coeff_count(header.sh_degree);
    let mut surfels = Vec::with_capacity(header.count);
    for rec in body.chunks_exact(stride) {
        let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap());
        let mut sh = vec![[0f32; 3]; coeffs];
        sh[0] = [f(10), f(11), f(12)];
        // Rest coefficients are stored channel-major.
        for c in 0..3 {
            for (k, coeff) in sh.iter_mut().enumerate().skip(1) {
                coeff[c] = f(13 + c * (coeffs - 1) + k - 1);
            }
        }
        surfels.push(Surfel {
            position: [f(0), f(1), f(2)],
            rotation: [f(3), f(4), f(5), f(6)],
            scale: [f(7), f(8)],
            opacity: f(9),
            sh_degree: header.sh_degree,
            sh,
        });
    }
    let mut scene = SurfelScene::new(surfels);
    scene.metadata = header.metadata.into_iter().collect();
    scene.validate()?;
    Ok(scene)
}

pub fn read_scene(path: &Path) -> Result<SurfelScene> {
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::file(path, e))?;
    decode_scene(&bytes)
}
