//! Pixel rasters shared by every stage of the pipeline.
//!
//! [`RgbImage`] is the 8-bit interchange format. [`RgbImageF`] carries the
//! same layout with unquantized intensities and is what the optimizer feeds
//! through the loss pipeline, where 8-bit rounding would flatten
//! finite-difference gradients. Code that works on either implements its
//! logic once over [`RgbRaster`].

use crate::error::{CcplError, Result};
use crate::stain::od_to_intensity;

/// Common read access to interleaved RGB rasters.
pub trait RgbRaster: Sized + Send + Sync {
    fn width(&self) -> usize;
    fn height(&self) -> usize;

    /// Intensity of sample `i` of the interleaved buffer (three per pixel).
    fn sample(&self, i: usize) -> f64;

    /// Builds a raster of this kind from interleaved optical densities.
    /// The 8-bit raster rounds half-up; the real-valued raster does not.
    fn from_od(width: usize, height: usize, od: &[f64], i0: f64) -> Self;

    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    fn pixel_count(&self) -> usize {
        self.width() * self.height()
    }

    fn pixel(&self, p: usize) -> [f64; 3] {
        [
            self.sample(3 * p),
            self.sample(3 * p + 1),
            self.sample(3 * p + 2),
        ]
    }
}

/// Round half-up to an 8-bit level. A 1e-9 slack absorbs floating-point
/// noise on exact ties such as `255 * 10^-1 = 25.5`.
pub fn quantize(v: f64) -> u8 {
    (v + 0.5 + 1e-9).floor().clamp(0.0, 255.0) as u8
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(CcplError::InvalidParameter(format!(
            "image dimensions must be positive, got {width}x{height}"
        )));
    }
    if len != 3 * width * height {
        return Err(CcplError::InvalidParameter(format!(
            "pixel buffer holds {len} samples, expected {}",
            3 * width * height
        )));
    }
    Ok(())
}

/// Row-major interleaved 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image filled with a single colour.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let pixels = rgb.iter().copied().cycle().take(3 * width * height).collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Builds an image from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_f64(&self) -> RgbImageF {
        RgbImageF {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|&v| f64::from(v)).collect(),
        }
    }
}

impl RgbRaster for RgbImage {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn sample(&self, i: usize) -> f64 {
        f64::from(self.pixels[i])
    }

    fn from_od(width: usize, height: usize, od: &[f64], i0: f64) -> Self {
        debug_assert_eq!(od.len(), 3 * width * height);
        Self {
            width,
            height,
            pixels: od.iter().map(|&d| quantize(od_to_intensity(d, i0))).collect(),
        }
    }
}

/// Row-major interleaved RGB image with real-valued intensities in [0, 255].
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImageF {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImageF {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(CcplError::InvalidParameter(format!(
                "non-finite intensity {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Rounds every intensity half-up to 8 bits.
    pub fn quantize(&self) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            pixels: self.data.iter().map(|&v| quantize(v)).collect(),
        }
    }
}

impl RgbRaster for RgbImageF {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn sample(&self, i: usize) -> f64 {
        self.data[i]
    }

    fn from_od(width: usize, height: usize, od: &[f64], i0: f64) -> Self {
        debug_assert_eq!(od.len(), 3 * width * height);
        Self {
            width,
            height,
            data: od
                .iter()
                .map(|&d| od_to_intensity(d, i0).clamp(0.0, 255.0))
                .collect(),
        }
    }
}

/// Single-channel real-valued image.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(CcplError::InvalidParameter(format!(
                "gray buffer of {} values does not match {width}x{height}",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }
}
