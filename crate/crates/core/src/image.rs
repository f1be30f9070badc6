use crate::{Error, Result};

/// Row-major, channel-interleaved float image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u32, data: Vec<f64>) -> Result<Self> {
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::InvalidValue(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height}x{channels} image needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("image value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u32, value: f64) -> Self {
        let n = width as usize * height as usize * channels as usize;
        Self {
            width,
            height,
            channels,
            data: vec![value; n],
        }
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        channels: u32,
        mut f: impl FnMut(u32, u32, u32) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * channels as usize);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32, c: u32) -> usize {
        ((y as usize * self.width as usize) + x as usize) * self.channels as usize + c as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, c: u32) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: u32, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[f64] {
        let i = self.index(x, y, 0);
        &self.data[i..i + self.channels as usize]
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &ImageBuffer) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }
}

/// Per-pixel z-depth along the camera axis with a validity mask.
///
/// Masked pixels always hold `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Every pixel valid. Values must be positive and finite.
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        let valid = vec![true; values.len()];
        Self::with_mask(width, height, values, valid)
    }

    pub fn with_mask(
        width: u32,
        height: u32,
        mut values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width as usize * height as usize;
        if values.len() != n || valid.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{width}x{height} depth map needs {n} values and mask entries, got {} and {}",
                values.len(),
                valid.len()
            )));
        }
        for (i, (v, &ok)) in values.iter_mut().zip(&valid).enumerate() {
            if ok {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("depth at index {i}")));
                }
                if *v <= 0.0 {
                    return Err(Error::InvalidValue(format!(
                        "depth at index {i} is {v}; valid depths must be positive"
                    )));
                }
            } else {
                *v = 0.0;
            }
        }
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }

    /// Treats non-positive and non-finite values as masked.
    pub fn from_raw(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        Self::with_mask(width, height, values, valid)
    }

    pub fn filled(width: u32, height: u32, depth: f64) -> Result<Self> {
        Self::new(width, height, vec![depth; width as usize * height as usize])
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        let i = y as usize * self.width as usize + x as usize;
        self.valid[i].then_some(self.values[i])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Copies a depth map with every value multiplied by `s > 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::with_mask(
            self.width,
            self.height,
            self.values.iter().map(|v| v * s).collect(),
            self.valid.clone(),
        )
    }

    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.values.clone(),
        }
    }
}
