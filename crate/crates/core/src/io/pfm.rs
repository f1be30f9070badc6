//! Portable float maps: `Pf` (one channel) or `PF` (RGB), 32-bit floats,
//! rows stored bottom-up. Written little-endian (scale `-1.0`); big-endian
//! files are accepted on read.
//!
//! Values are stored as `f32`, so a round trip is bit-exact for data that is
//! already single precision.

use super::{open, write_bytes};
use crate::image::{DepthMap, ImageBuffer};
use crate::{Error, Result};
use std::io::Read;
use std::path::Path;

pub fn encode_pfm(img: &ImageBuffer) -> Result<Vec<u8>> {
    let magic = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::Unsupported(format!(
                "PFM stores 1 or 3 channels, not {c}"
            )))
        }
    };
    let header = format!("{magic}\n{} {}\n-1.0\n", img.width, img.height);
    let row_len = img.width as usize * img.channels as usize;
    let mut out = Vec::with_capacity(header.len() + img.data.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for row in img.data.chunks_exact(row_len.max(1)).rev() {
        for &v in row {
            let f = v as f32;
            if !f.is_finite() {
                return Err(Error::NonFinite(format!("PFM payload value {v}")));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .filter(|s| !s.is_empty())
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut pos = 0;
    let channels = match next_token(bytes, &mut pos) {
        Some("Pf") => 1u32,
        Some("PF") => 3,
        other => {
            return Err(Error::BadMagic(format!(
                "expected `Pf` or `PF`, found `{}`",
                other.unwrap_or("")
            )))
        }
    };
    let mut number = |what: &str| {
        next_token(bytes, &mut pos)
            .ok_or_else(|| Error::MalformedHeader(format!("missing PFM {what}")))
    };
    let width: u32 = number("width")?
        .parse()
        .map_err(|_| Error::MalformedHeader("bad PFM width".into()))?;
    let height: u32 = number("height")?
        .parse()
        .map_err(|_| Error::MalformedHeader("bad PFM height".into()))?;
    let scale: f64 = number("scale")?
        .parse()
        .map_err(|_| Error::MalformedHeader("bad PFM scale".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::MalformedHeader(format!("bad PFM scale {scale}")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader("PFM header not terminated".into()));
    }
    let body = &bytes[pos + 1..];
    let row_len = width as usize * channels as usize;
    let expected = row_len * height as usize * 4;
    if body.len() != expected {
        return Err(Error::CountMismatch(format!(
            "{width}x{height} PFM needs {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let little = scale < 0.0;
    let values: Vec<f32> = body
        .chunks_exact(4)
        .map(|b| {
            let b: [u8; 4] = b.try_into().unwrap();
            if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            }
        })
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("PFM payload value at index {i}")));
    }
    let mut data = Vec::with_capacity(values.len());
    for row in values.chunks_exact(row_len.max(1)).rev() {
        data.extend(row.iter().map(|&v| v as f64));
    }
    ImageBuffer::new(width, height, channels, data)
}

pub fn write_pfm(path: &Path, img: &ImageBuffer) -> Result<()> {
    write_bytes(path, &encode_pfm(img)?, true)
}

pub fn read_pfm(path: &Path) -> Result<ImageBuffer> {
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::file(path, e))?;
    decode_pfm(&bytes)
}

/// Masked pixels are written as `0`.
pub fn write_depth_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    write_pfm(path, &depth.to_image())
}

/// Non-positive values become masked pixels.
pub fn read_depth_pfm(path: &Path) -> Result<DepthMap> {
    let img = read_pfm(path)?;
    if img.channels != 1 {
        return Err(Error::ShapeMismatch(format!(
            "depth PFM must have one channel, found {}",
            img.channels
        )));
    }
    DepthMap::from_raw(img.width, img.height, img.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_depth_round_trip() {
        let img = ImageBuffer::filled(5, 4, 1, 2.0);
        let bytes = encode_pfm(&img).unwrap();
        assert!(bytes.starts_with(b"Pf\n5 4\n-1.0\n"));
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn rows_are_bottom_up() {
        let img = ImageBuffer::from_fn(2, 2, 1, |_, y, _| y as f64);
        let bytes = encode_pfm(&img).unwrap();
        let payload = &bytes[bytes.len() - 16..];
        assert_eq!(f32::from_le_bytes(payload[..4].try_into().unwrap()), 1.0);
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn rgb_and_big_endian() {
        let img = ImageBuffer::from_fn(3, 2, 3, |x, y, c| (x * 10 + y * 3 + c) as f64 * 0.25);
        assert_eq!(decode_pfm(&encode_pfm(&img).unwrap()).unwrap(), img);
        let mut be = b"PF\n3 2\n1.0\n".to_vec();
        for row in img.data.chunks(9).rev() {
            for v in row {
                be.extend_from_slice(&(*v as f32).to_be_bytes());
            }
        }
        assert_eq!(decode_pfm(&be).unwrap(), img);
    }

    #[test]
    fn rejects_nan_and_bad_magic() {
        let mut img = ImageBuffer::filled(2, 2, 1, 1.0);
        img.data[3] = f64::NAN;
        assert!(matches!(encode_pfm(&img), Err(Error::NonFinite(_))));
        img.data[3] = 1e300;
        assert!(matches!(encode_pfm(&img), Err(Error::NonFinite(_))));
        assert!(matches!(
            decode_pfm(b"P6\n2 2\n255\n"),
            Err(Error::BadMagic(_))
        ));
        let mut bytes = b"Pf\n1 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_pfm(&bytes), Err(Error::NonFinite(_))));
        assert!(matches!(
            decode_pfm(&bytes[..bytes.len() - 1]),
            Err(Error::CountMismatch(_))
        ));
    }
}
