//! Nucleus/membrane cross-channel correlation.
//!
//! The hematoxylin and DAB isolations of an image are embedded separately;
//! the correlation `R = γ·‖f_H − f_D‖² + (1 − γ)·(1 − cos(f_H, f_D))`
//! summarises how the two channels relate. The consistency loss then
//! compares `R` of a generated image against `R` of the real one.
//!
//! `R` is a scalar, so the cosine term of the consistency loss only sees
//! signs: for two positive correlations it is exactly zero and the loss
//! reduces to `θ·(R_g − R_r)²`. [`NmccConfig::vector_mode`] switches to a
//! per-coordinate correlation profile where the cosine term is informative.

use serde::{Deserialize, Serialize};

use crate::error::{dims_mismatch, CcplError, Result};
use crate::features::{check_dims, cosine, FeatureExtractor, FeatureVector};
use crate::raster::RgbRaster;
use crate::stain::{isolate_channel, Stain, StainMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmccConfig {
    pub gamma: f64,
    pub theta: f64,
    /// Compare per-coordinate correlation profiles instead of scalars.
    pub vector_mode: bool,
}

impl Default for NmccConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            theta: 0.5,
            vector_mode: false,
        }
    }
}

impl NmccConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("theta", self.theta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CcplError::InvalidParameter(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelCorrelation(pub f64);

impl ChannelCorrelation {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn channel_correlation(
    f_h: &FeatureVector,
    f_d: &FeatureVector,
    cfg: &NmccConfig,
) -> Result<ChannelCorrelation> {
    let (h, d) = (f_h.values(), f_d.values());
    check_dims(h, d)?;
    let dist: f64 = h.iter().zip(d).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(ChannelCorrelation(
        cfg.gamma * dist + (1.0 - cfg.gamma) * (1.0 - cosine(h, d)),
    ))
}

/// Per-coordinate profile `γ·(f_H,k − f_D,k)² + (1 − γ)·(1 − cos(f_H, f_D))`.
pub fn channel_correlation_profile(
    f_h: &FeatureVector,
    f_d: &FeatureVector,
    cfg: &NmccConfig,
) -> Result<Vec<f64>> {
    let (h, d) = (f_h.values(), f_d.values());
    check_dims(h, d)?;
    let shared = (1.0 - cfg.gamma) * (1.0 - cosine(h, d));
    Ok(h.iter()
        .zip(d)
        .map(|(a, b)| cfg.gamma * (a - b).powi(2) + shared)
        .collect())
}

/// Cosine of two scalars: sign agreement, with 1 for two zeros and 0 when
/// exactly one is zero.
pub fn scalar_cosine(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        1.0
    } else if a == 0.0 || b == 0.0 {
        0.0
    } else if (a > 0.0) == (b > 0.0) {
        1.0
    } else {
        -1.0
    }
}

/// `θ·(R_g − R_r)² + (1 − θ)·(1 − cos(R_g, R_r))` over scalars.
pub fn cross_channel_consistency_loss(
    r_g: ChannelCorrelation,
    r_r: ChannelCorrelation,
    cfg: &NmccConfig,
) -> f64 {
    let (g, r) = (r_g.0, r_r.0);
    cfg.theta * (g - r).powi(2) + (1.0 - cfg.theta) * (1.0 - scalar_cosine(g, r))
}

/// Vector-mode consistency loss over correlation profiles.
pub fn profile_consistency_loss(r_g: &[f64], r_r: &[f64], cfg: &NmccConfig) -> Result<f64> {
    check_dims(r_g, r_r)?;
    let dist: f64 = r_g.iter().zip(r_r).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(cfg.theta * dist + (1.0 - cfg.theta) * (1.0 - cosine(r_g, r_r)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmccBreakdown {
    #[serde(rename = "R_g")]
    pub r_g: f64,
    #[serde(rename = "R_r")]
    pub r_r: f64,
    #[serde(rename = "L_cross")]
    pub l_cross: f64,
}

/// H and D features of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelFeatures {
    pub h: FeatureVector,
    pub d: FeatureVector,
}

impl ChannelFeatures {
    pub fn extract<R: RgbRaster, X: FeatureExtractor>(
        img: &R,
        extractor: &X,
        m: &StainMatrix,
        i0: f64,
    ) -> Result<Self> {
        Ok(Self {
            h: extractor.extract(&isolate_channel(img, Stain::Hematoxylin, m, i0))?,
            d: extractor.extract(&isolate_channel(img, Stain::Dab, m, i0))?,
        })
    }
}

/// Cross-channel loss from precomputed channel features.
pub fn nmcc_from_features(
    gen: &ChannelFeatures,
    real: &ChannelFeatures,
    cfg: &NmccConfig,
) -> Result<NmccBreakdown> {
    let r_g = channel_correlation(&gen.h, &gen.d, cfg)?;
    let r_r = channel_correlation(&real.h, &real.d, cfg)?;
    let l_cross = if cfg.vector_mode {
        profile_consistency_loss(
            &channel_correlation_profile(&gen.h, &gen.d, cfg)?,
            &channel_correlation_profile(&real.h, &real.d, cfg)?,
            cfg,
        )?
    } else {
        cross_channel_consistency_loss(r_g, r_r, cfg)
    };
    Ok(NmccBreakdown {
        r_g: r_g.0,
        r_r: r_r.0,
        l_cross,
    })
}

pub fn nmcc_loss<R: RgbRaster, X: FeatureExtractor>(
    gen: &R,
    real: &R,
    extractor: &X,
    m: &StainMatrix,
    cfg: &NmccConfig,
    i0: f64,
) -> Result<NmccBreakdown> {
    if gen.dims() != real.dims() {
        return Err(dims_mismatch(gen.dims(), real.dims()));
    }
    nmcc_from_features(
        &ChannelFeatures::extract(gen, extractor, m, i0)?,
        &ChannelFeatures::extract(real, extractor, m, i0)?,
        cfg,
    )
}
