//! Full-reference image quality metrics and the Fréchet distance between
//! feature populations.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{dims_mismatch, CcplError, Result};
use crate::features::FeatureSet;
use crate::fod::to_grayscale;
use crate::raster::RgbRaster;

const MAX_VALUE: f64 = 255.0;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const EIGEN_FLOOR: f64 = 1e-12;

/// Peak signal-to-noise ratio in dB, or infinite for identical images.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn as_f64(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v.is_infinite() && v > 0.0 {
            Psnr::Infinite
        } else {
            Psnr::Finite(v)
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Finite(v) => s.serialize_f64(*v),
            Psnr::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Psnr::Finite(v)),
            Repr::Text(s) if s == "inf" => Ok(Psnr::Infinite),
            Repr::Text(s) => Err(serde::de::Error::custom(format!("invalid PSNR {s:?}"))),
        }
    }
}

fn check_same<R: RgbRaster>(a: &R, b: &R) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(dims_mismatch(a.dims(), b.dims()));
    }
    Ok(())
}

/// Mean squared error over every channel of every pixel.
pub fn mse<R: RgbRaster>(a: &R, b: &R) -> Result<f64> {
    check_same(a, b)?;
    let n = 3 * a.pixel_count();
    Ok((0..n).map(|i| (a.sample(i) - b.sample(i)).powi(2)).sum::<f64>() / n as f64)
}

pub fn psnr<R: RgbRaster>(a: &R, b: &R) -> Result<Psnr> {
    let mse = mse(a, b)?;
    if mse == 0.0 {
        return Ok(Psnr::Infinite);
    }
    Ok(Psnr::Finite(10.0 * (MAX_VALUE * MAX_VALUE / mse).log10()))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable 'valid' Gaussian filtering.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * rows[(y + j) * ow + x])
                .sum();
        }
    }
    out
}

/// Filtered moments of one side of an SSIM comparison.
///
/// Holding these for a fixed reference image lets repeated comparisons
/// against it skip half of the filtering work.
#[derive(Clone, Debug)]
pub struct SsimReference {
    width: usize,
    height: usize,
    luma: Vec<f64>,
    mu: Vec<f64>,
    sq: Vec<f64>,
}

impl SsimReference {
    pub fn new<R: RgbRaster>(img: &R) -> Result<Self> {
        let (w, h) = img.dims();
        if w.min(h) < SSIM_WINDOW {
            return Err(CcplError::ImageTooSmall {
                width: w,
                height: h,
                min_side: SSIM_WINDOW,
            });
        }
        let k = gaussian_kernel();
        let luma = to_grayscale(img).values;
        let sq_src: Vec<f64> = luma.iter().map(|v| v * v).collect();
        Ok(Self {
            width: w,
            height: h,
            mu: filter_valid(&luma, w, h, &k),
            sq: filter_valid(&sq_src, w, h, &k),
            luma,
        })
    }

    /// Mean SSIM of `img` against this reference over all valid windows.
    pub fn score<R: RgbRaster>(&self, img: &R) -> Result<f64> {
        if img.dims() != (self.width, self.height) {
            return Err(dims_mismatch(img.dims(), (self.width, self.height)));
        }
        let other = Self::new(img)?;
        Ok(self.score_against(&other))
    }

    fn score_against(&self, other: &Self) -> f64 {
        let (w, h) = (self.width, self.height);
        let k = gaussian_kernel();
        let cross: Vec<f64> = self.luma.iter().zip(&other.luma).map(|(a, b)| a * b).collect();
        let mu_xy = filter_valid(&cross, w, h, &k);
        let c1 = (SSIM_K1 * MAX_VALUE).powi(2);
        let c2 = (SSIM_K2 * MAX_VALUE).powi(2);
        let mut total = 0.0;
        for (i, &xy) in mu_xy.iter().enumerate() {
            let (mx, my) = (self.mu[i], other.mu[i]);
            let vx = self.sq[i] - mx * mx;
            let vy = other.sq[i] - my * my;
            let cov = xy - mx * my;
            let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
        }
        total / mu_xy.len() as f64
    }
}

/// Luma SSIM with an 11×11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03,
/// averaged over window positions that fit inside the image.
pub fn ssim<R: RgbRaster>(a: &R, b: &R) -> Result<f64> {
    check_same(a, b)?;
    Ok(SsimReference::new(a)?.score_against(&SsimReference::new(b)?))
}

/// Pearson correlation over all channels of all pixels.
pub fn pcc<R: RgbRaster>(a: &R, b: &R) -> Result<f64> {
    check_same(a, b)?;
    let n = 3 * a.pixel_count();
    let nf = n as f64;
    let ma = (0..n).map(|i| a.sample(i)).sum::<f64>() / nf;
    let mb = (0..n).map(|i| b.sample(i)).sum::<f64>() / nf;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let da = a.sample(i) - ma;
        let db = b.sample(i) - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(CcplError::ZeroVariance);
    }
    // one square root keeps pcc(x, x) at exactly 1
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn mean_and_covariance(set: &FeatureSet) -> (DVector<f64>, DMatrix<f64>) {
    let (n, d) = (set.len(), set.dim());
    let rows = DMatrix::from_fn(n, d, |i, j| f64::from(set.row(i)[j]));
    let mean = DVector::from_fn(d, |j, _| rows.column(j).sum() / n as f64);
    let mut centered = rows;
    for j in 0..d {
        let mj = mean[j];
        centered.column_mut(j).iter_mut().for_each(|v| *v -= mj);
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    (mean, cov)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn clamped_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let mut eig = SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues.iter_mut().for_each(|v| {
        if *v < EIGEN_FLOOR {
            *v = 0.0;
        }
    });
    eig
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = clamped_eigen(m);
    let roots = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    &eig.eigenvectors * roots * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussian fits of two feature populations:
/// `‖μ_a − μ_b‖² + tr(Σ_a + Σ_b − 2·(Σ_a^½ Σ_b Σ_a^½)^½)`.
pub fn frechet_distance(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(CcplError::DimensionMismatch {
            left: a.dim().to_string(),
            right: b.dim().to_string(),
        });
    }
    let fewest = a.len().min(b.len());
    if fewest < 2 {
        return Err(CcplError::TooFewSamples {
            needed: 2,
            got: fewest,
        });
    }
    let (mu_a, cov_a) = mean_and_covariance(a);
    let (mu_b, cov_b) = mean_and_covariance(b);
    let root_a = psd_sqrt(&cov_a);
    let inner = &root_a * &cov_b * &root_a;
    let tr_cross: f64 = clamped_eigen(&inner).eigenvalues.iter().map(|v| v.sqrt()).sum();
    let d = (mu_a - mu_b).norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * tr_cross;
    Ok(d.max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psnr: Psnr,
    pub ssim: f64,
    pub pcc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frechet: Option<f64>,
}

impl MetricsReport {
    pub fn for_pair<R: RgbRaster>(gen: &R, real: &R) -> Result<Self> {
        Ok(Self {
            psnr: psnr(gen, real)?,
            ssim: ssim(gen, real)?,
            pcc: pcc(gen, real)?,
            frechet: None,
        })
    }
}
