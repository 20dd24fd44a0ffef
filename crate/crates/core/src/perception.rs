//! Channel-level FOD statistics and the dual-channel perception loss.
//!
//! For each stain channel the loss compares three summaries of the FOD map
//! between a generated and a real image: the global mean, the means over a
//! grid of local blocks, and a histogram whose bins hold the summed FOD of
//! the pixels that fall in them (divided by the pixel count).

use serde::{Deserialize, Serialize};

use crate::error::{dims_mismatch, CcplError, Result};
use crate::fod::{channel_fod, FodMap, FodParams};
use crate::raster::RgbRaster;
use crate::stain::StainMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcpConfig {
    pub block_rows: usize,
    pub block_cols: usize,
    pub n_bins: usize,
    /// Histogram range; `None` means `(0, 2^α]` for the channel's exponent.
    pub hist_range: Option<[f64; 2]>,
    /// Weight of the H channel; D gets `1 − alpha_weight`.
    pub alpha_weight: f64,
}

impl Default for DcpConfig {
    fn default() -> Self {
        Self {
            block_rows: 8,
            block_cols: 8,
            n_bins: 32,
            hist_range: None,
            alpha_weight: 0.1,
        }
    }
}

impl DcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_rows == 0 || self.block_cols == 0 {
            return Err(CcplError::InvalidParameter("block grid must be at least 1x1".into()));
        }
        if self.n_bins == 0 {
            return Err(CcplError::InvalidParameter("histogram needs at least one bin".into()));
        }
        if let Some([lo, hi]) = self.hist_range {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(CcplError::InvalidParameter(format!(
                    "histogram range ({lo}, {hi}) is empty"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha_weight) {
            return Err(CcplError::InvalidParameter(format!(
                "alpha weight {} outside [0, 1]",
                self.alpha_weight
            )));
        }
        Ok(())
    }

    pub fn block_count(&self) -> usize {
        self.block_rows * self.block_cols
    }

    pub fn range_for(&self, p: &FodParams) -> (f64, f64) {
        match self.hist_range {
            Some([lo, hi]) => (lo, hi),
            None => (0.0, 2f64.powf(p.exponent)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub global_mean: f64,
    pub block_means: Vec<f64>,
    /// Pixels per block, same order as `block_means`.
    pub block_pixels: Vec<usize>,
    pub hist: Vec<f64>,
    pub bin_edges: Vec<f64>,
    pub pixel_count: usize,
}

/// Splits `len` into `parts` spans of `len / parts`, the last absorbing the remainder.
pub(crate) fn spans(len: usize, parts: usize) -> impl Iterator<Item = (usize, usize)> {
    let step = len / parts;
    (0..parts).map(move |k| {
        let start = k * step;
        let end = if k + 1 == parts { len } else { start + step };
        (start, end)
    })
}

fn bin_index(v: f64, edges: &[f64]) -> Option<usize> {
    let n = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[n]);
    if !(v >= lo && v <= hi) {
        return None;
    }
    let mut i = (((v - lo) / (hi - lo)) * n as f64).floor() as usize;
    i = i.min(n - 1);
    while i > 0 && v < edges[i] {
        i -= 1;
    }
    while i + 1 < n && v >= edges[i + 1] {
        i += 1;
    }
    Some(i)
}

pub fn channel_stats(fod: &FodMap, cfg: &DcpConfig) -> Result<ChannelStats> {
    cfg.validate()?;
    let (w, h) = (fod.width, fod.height);
    if h < cfg.block_rows || w < cfg.block_cols {
        return Err(CcplError::DimensionTooSmall {
            width: w,
            height: h,
            rows: cfg.block_rows,
            cols: cfg.block_cols,
        });
    }
    let n = w * h;
    let global_mean = fod.values.iter().sum::<f64>() / n as f64;

    let mut block_means = Vec::with_capacity(cfg.block_count());
    let mut block_pixels = Vec::with_capacity(cfg.block_count());
    for (y0, y1) in spans(h, cfg.block_rows) {
        for (x0, x1) in spans(w, cfg.block_cols) {
            let sum: f64 = (y0..y1)
                .map(|y| fod.values[y * w + x0..y * w + x1].iter().sum::<f64>())
                .sum();
            let count = (y1 - y0) * (x1 - x0);
            block_means.push(sum / count as f64);
            block_pixels.push(count);
        }
    }

    let (lo, hi) = cfg.range_for(&fod.params);
    let bins = cfg.n_bins;
    let mut bin_edges: Vec<f64> = (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect();
    bin_edges[bins] = hi;
    let mut hist = vec![0.0; bins];
    for &v in &fod.values {
        if let Some(i) = bin_index(v, &bin_edges) {
            hist[i] += v;
        }
    }
    hist.iter_mut().for_each(|b| *b /= n as f64);

    Ok(ChannelStats {
        global_mean,
        block_means,
        block_pixels,
        hist,
        bin_edges,
        pixel_count: n,
    })
}

/// Statistics of one stain channel of an image.
pub fn image_channel_stats<R: RgbRaster>(
    img: &R,
    cfg: &DcpConfig,
    p: &FodParams,
    m: &StainMatrix,
    i0: f64,
) -> Result<ChannelStats> {
    channel_stats(&channel_fod(img, m, p, i0), cfg)
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Squared global-mean gap plus mean squared block and histogram gaps.
pub fn channel_perception_loss(g: &ChannelStats, r: &ChannelStats) -> Result<f64> {
    if g.block_means.len() != r.block_means.len() {
        return Err(CcplError::ConfigMismatch(format!(
            "{} vs {} blocks",
            g.block_means.len(),
            r.block_means.len()
        )));
    }
    if g.hist.len() != r.hist.len() || g.bin_edges != r.bin_edges {
        return Err(CcplError::ConfigMismatch("histogram bins differ".into()));
    }
    Ok((g.global_mean - r.global_mean).powi(2)
        + mean_sq_diff(&g.block_means, &r.block_means)
        + mean_sq_diff(&g.hist, &r.hist))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualBreakdown {
    #[serde(rename = "L_H")]
    pub l_h: f64,
    #[serde(rename = "L_D")]
    pub l_d: f64,
    #[serde(rename = "L_dual")]
    pub l_dual: f64,
}

impl DualBreakdown {
    pub fn combine(l_h: f64, l_d: f64, alpha: f64) -> Self {
        Self {
            l_h,
            l_d,
            l_dual: alpha * l_h + (1.0 - alpha) * l_d,
        }
    }
}

/// `α·L_H + (1 − α)·L_D` between a generated and a real image.
pub fn dual_perception_loss<R: RgbRaster>(
    gen: &R,
    real: &R,
    cfg: &DcpConfig,
    fod_h: &FodParams,
    fod_d: &FodParams,
    m: &StainMatrix,
    i0: f64,
) -> Result<DualBreakdown> {
    if gen.dims() != real.dims() {
        return Err(dims_mismatch(gen.dims(), real.dims()));
    }
    let l_h = channel_perception_loss(
        &image_channel_stats(gen, cfg, fod_h, m, i0)?,
        &image_channel_stats(real, cfg, fod_h, m, i0)?,
    )?;
    let l_d = channel_perception_loss(
        &image_channel_stats(gen, cfg, fod_d, m, i0)?,
        &image_channel_stats(real, cfg, fod_d, m, i0)?,
    )?;
    Ok(DualBreakdown::combine(l_h, l_d, cfg.alpha_weight))
}
