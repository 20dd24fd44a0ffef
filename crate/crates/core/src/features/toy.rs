use crate::error::Result;
use crate::fod::LUMA_WEIGHTS;
use crate::perception::spans;
use crate::raster::RgbRaster;

use super::{FeatureExtractor, FeatureVector};

pub const TOY_FEATURE_DIM: usize = 46;

const HIST_BINS: usize = 8;
const POOL_GRID: usize = 4;

/// Deterministic 46-dimensional image descriptor.
///
/// Layout, in order: per-channel means (3), per-channel population
/// standard deviations (3), per-channel 8-bin intensity histograms with bin
/// width 32 normalised to sum 1 (3 × 8), and a 4×4 average pooling of the
/// BT.601 luma divided by 255 (16, row-major). Pooling cells follow the
/// block convention of the perception statistics: equal spans with the
/// remainder folded into the last row/column. On images with fewer than
/// four rows or columns an empty span samples the nearest existing line.
#[derive(Clone, Copy, Debug, Default)]
pub struct ToyExtractor;

impl ToyExtractor {
    pub fn describe<R: RgbRaster>(img: &R) -> FeatureVector {
        let n = img.pixel_count();
        let nf = n as f64;
        let mut out = Vec::with_capacity(TOY_FEATURE_DIM);

        let mut sums = [0.0; 3];
        let mut hist = [[0.0; HIST_BINS]; 3];
        for p in 0..n {
            let px = img.pixel(p);
            for c in 0..3 {
                sums[c] += px[c];
                let bin = ((px[c] / 32.0).floor().max(0.0) as usize).min(HIST_BINS - 1);
                hist[c][bin] += 1.0;
            }
        }
        let means = sums.map(|s| s / nf);
        let mut sq = [0.0; 3];
        for p in 0..n {
            let px = img.pixel(p);
            for c in 0..3 {
                sq[c] += (px[c] - means[c]).powi(2);
            }
        }
        out.extend_from_slice(&means);
        out.extend(sq.iter().map(|s| (s / nf).sqrt()));
        for h in &hist {
            out.extend(h.iter().map(|count| count / nf));
        }

        let (w, h) = img.dims();
        let luma = |x: usize, y: usize| {
            let px = img.pixel(y * w + x);
            (LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2]) / 255.0
        };
        let widen = |(start, end): (usize, usize), len: usize| {
            if start == end {
                let i = start.min(len - 1);
                (i, i + 1)
            } else {
                (start, end)
            }
        };
        for (y0, y1) in spans(h, POOL_GRID).map(|s| widen(s, h)) {
            for (x0, x1) in spans(w, POOL_GRID).map(|s| widen(s, w)) {
                let mut acc = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += luma(x, y);
                    }
                }
                out.push(acc / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }

        debug_assert_eq!(out.len(), TOY_FEATURE_DIM);
        FeatureVector(out)
    }
}

impl FeatureExtractor for ToyExtractor {
    fn extract<R: RgbRaster>(&self, img: &R) -> Result<FeatureVector> {
        Ok(Self::describe(img))
    }
}
