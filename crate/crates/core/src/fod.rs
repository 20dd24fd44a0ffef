//! Grayscale optical density and the focal optical density transform.
//!
//! `FOD = od^α` where that value exceeds the channel threshold `T`, and 0
//! otherwise. The threshold is applied to the transformed value, so every
//! nonzero FOD is strictly greater than `T`.

use serde::{Deserialize, Serialize};

use crate::error::{CcplError, Result};
use crate::raster::{GrayImage, RgbRaster};
use crate::stain::{intensity_to_od, isolate_channel, Stain, StainMatrix};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

pub const DEFAULT_FOD_THRESHOLD: f64 = 0.15;
pub const DEFAULT_FOD_EXPONENT: f64 = 1.8;

/// Stain channels that carry a FOD map: nuclei (H) and membrane (D).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FodChannel {
    H,
    D,
}

impl FodChannel {
    pub fn stain(self) -> Stain {
        match self {
            FodChannel::H => Stain::Hematoxylin,
            FodChannel::D => Stain::Dab,
        }
    }
}

impl std::fmt::Display for FodChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FodChannel::H => "H",
            FodChannel::D => "D",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FodParams {
    pub channel: FodChannel,
    pub threshold: f64,
    pub exponent: f64,
}

impl FodParams {
    pub fn new(channel: FodChannel, threshold: f64, exponent: f64) -> Result<Self> {
        let p = Self {
            channel,
            threshold,
            exponent,
        };
        p.validate()?;
        Ok(p)
    }

    /// `T = 0.15`, `α = 1.8`.
    pub fn default_for(channel: FodChannel) -> Self {
        Self {
            channel,
            threshold: DEFAULT_FOD_THRESHOLD,
            exponent: DEFAULT_FOD_EXPONENT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(CcplError::InvalidParameter(format!(
                "FOD threshold must be >= 0, got {}",
                self.threshold
            )));
        }
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(CcplError::InvalidParameter(format!(
                "FOD exponent must be > 0, got {}",
                self.exponent
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, od: f64) -> f64 {
        let v = od.powf(self.exponent);
        if v > self.threshold {
            v
        } else {
            0.0
        }
    }
}

/// Scalar optical density per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FodMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub params: FodParams,
}

impl FodMap {
    /// Wraps raw values, checking the map invariant (each value is 0 or > T).
    pub fn new(width: usize, height: usize, values: Vec<f64>, params: FodParams) -> Result<Self> {
        params.validate()?;
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(CcplError::InvalidParameter(format!(
                "FOD buffer of {} values does not match {width}x{height}",
                values.len()
            )));
        }
        if let Some(v) = values
            .iter()
            .find(|&&v| !(v == 0.0 || (v > params.threshold && v.is_finite())))
        {
            return Err(CcplError::InvalidParameter(format!(
                "FOD value {v} is neither 0 nor above the threshold {}",
                params.threshold
            )));
        }
        Ok(Self {
            width,
            height,
            values,
            params,
        })
    }
}

pub fn to_grayscale<R: RgbRaster>(img: &R) -> GrayImage {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let values = (0..img.pixel_count())
        .map(|p| {
            let [r, g, b] = img.pixel(p);
            wr * r + wg * g + wb * b
        })
        .collect();
    GrayImage {
        width: img.width(),
        height: img.height(),
        values,
    }
}

pub fn gray_to_od(g: &GrayImage, i0: f64) -> DensityMap {
    assert!(i0 > 0.0, "reference intensity must be positive");
    DensityMap {
        width: g.width,
        height: g.height,
        values: g.values.iter().map(|&v| intensity_to_od(v, i0)).collect(),
    }
}

pub fn compute_fod(od: &DensityMap, p: &FodParams) -> FodMap {
    FodMap {
        width: od.width,
        height: od.height,
        values: od.values.iter().map(|&v| p.apply(v)).collect(),
        params: *p,
    }
}

/// isolate → grayscale → OD → FOD for the channel named in `p`.
pub fn channel_fod<R: RgbRaster>(ihc: &R, m: &StainMatrix, p: &FodParams, i0: f64) -> FodMap {
    let isolated = isolate_channel(ihc, p.channel.stain(), m, i0);
    compute_fod(&gray_to_od(&to_grayscale(&isolated), i0), p)
}
