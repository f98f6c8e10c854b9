//! Floating-point images used by the pixel-space defenses.

use crate::error::{Error, Result};

/// `height x width x channels` image stored row-major, channels interleaved,
/// every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("shape", format!("{height}x{width} image is empty")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid("channels", format!("{channels} (expected 1 or 3)")));
        }
        let expected = height * width * channels;
        if pixels.len() != expected {
            return Err(Error::invalid(
                "pixels",
                format!("{} values for a {height}x{width}x{channels} image", pixels.len()),
            ));
        }
        if let Some(index) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return if pixels[index].is_finite() {
                Err(Error::invalid(
                    "pixels",
                    format!("value {} at {index} is outside [0, 1]", pixels[index]),
                ))
            } else {
                Err(Error::NonFinite { index })
            };
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds an image from unconstrained values, clamping each into `[0, 1]`.
    pub(crate) fn from_clamped(shape: (usize, usize, usize), mut pixels: Vec<f64>) -> Self {
        pixels.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        let (height, width, channels) = shape;
        Self {
            height,
            width,
            channels,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Number of pixel locations, `height * width`.
    pub fn locations(&self) -> usize {
        self.height * self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    /// Channel values at pixel location `index` (row-major).
    pub fn location(&self, index: usize) -> &[f64] {
        &self.pixels[index * self.channels..(index + 1) * self.channels]
    }

    pub fn expect_shape(&self, shape: (usize, usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::ShapeMismatch {
                expected: shape,
                actual: self.shape(),
            });
        }
        Ok(())
    }
}
