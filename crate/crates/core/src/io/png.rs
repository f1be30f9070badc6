//! 8-bit PNG images. Values are stored as-is (no gamma transform) and
//! quantized with round-half-up: `floor(v·255 + 0.5)`.

use super::{open, write_bytes};
use crate::image::ImageBuffer;
use crate::{Error, Result};
use png::{BitDepth, ColorType};
use std::io::{Cursor, Read};
use std::path::Path;

/// Byte for a value in `[0, 1]`.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor() as u8
}

pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let color = match img.channels {
        1 => ColorType::Grayscale,
        3 => ColorType::Rgb,
        4 => ColorType::Rgba,
        c => return Err(Error::Unsupported(format!("PNG with {c} channels"))),
    };
    if let Some(v) = img.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidValue(format!(
            "PNG values must lie in [0, 1], found {v}"
        )));
    }
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width, img.height);
        enc.set_color(color);
        enc.set_depth(BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::InvalidValue(format!("PNG encoding: {e}")))?;
        w.write_image_data(&bytes)
            .map_err(|e| Error::InvalidValue(format!("PNG encoding: {e}")))?;
        w.finish()
            .map_err(|e| Error::InvalidValue(format!("PNG encoding: {e}")))?;
    }
    Ok(out)
}

/// Grayscale, RGB and RGBA at 8 bits are read; gray+alpha becomes RGBA.
pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| match e {
        png::DecodingError::Format(_) => Error::BadMagic(format!("not a PNG: {e}")),
        _ => Error::MalformedHeader(format!("PNG: {e}")),
    })?;
    let info = reader.info();
    let (width, height) = (info.width, info.height);
    if info.bit_depth != BitDepth::Eight {
        return Err(Error::Unsupported(format!(
            "{}-bit PNG; only 8-bit images are read",
            info.bit_depth as u8
        )));
    }
    let color = info.color_type;
    let channels = match color {
        ColorType::Grayscale => 1,
        ColorType::Rgb => 3,
        ColorType::Rgba | ColorType::GrayscaleAlpha => 4,
        ColorType::Indexed => return Err(Error::Unsupported("palette PNG".into())),
    };
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::CountMismatch(format!("PNG payload: {e}")))?;
    let raw = &buf[..frame.buffer_size()];
    let line = frame.line_size;
    let src_ch = color.samples();
    let mut data = Vec::with_capacity(width as usize * height as usize * channels as usize);
    for row in raw.chunks(line).take(height as usize) {
        for px in row[..width as usize * src_ch].chunks_exact(src_ch) {
            if color == ColorType::GrayscaleAlpha {
                data.extend([px[0], px[0], px[0], px[1]].map(|b| b as f64 / 255.0));
            } else {
                data.extend(px.iter().map(|&b| b as f64 / 255.0));
            }
        }
    }
    ImageBuffer::new(width, height, channels, data)
}

pub fn write_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    write_bytes(path, &encode_png(img)?, true)
}

pub fn read_png(path: &Path) -> Result<ImageBuffer> {
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::file(path, e))?;
    decode_png(&bytes)
}
