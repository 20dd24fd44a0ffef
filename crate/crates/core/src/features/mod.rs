//! Feature vectors and the feature distillation loss.
//!
//! Features come either from files written by an external encoder (see
//! [`io`]) or from [`ToyExtractor`], a deterministic hand-crafted
//! descriptor. The losses only require matching dimensions.

pub mod io;
mod toy;

use serde::{Deserialize, Serialize};

use crate::error::{CcplError, Result};
use crate::raster::RgbRaster;

pub use io::{load_features, manifest_path, save_features};
pub use toy::{ToyExtractor, TOY_FEATURE_DIM};

/// Produces a feature vector for an image.
pub trait FeatureExtractor: Sync {
    fn extract<R: RgbRaster>(&self, img: &R) -> Result<FeatureVector>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CcplError::InvalidParameter("feature vector is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CcplError::InvalidParameter("feature vector has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0.iter().map(|v| v * k).collect())
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = CcplError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// `n` feature rows of dimension `dim`, stored at 32-bit precision, each
/// tagged with an image identifier.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureSet {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != ids.len() * dim {
            return Err(CcplError::InvalidParameter(format!(
                "{} values cannot form {} rows of dimension {dim}",
                data.len(),
                ids.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CcplError::InvalidParameter("feature set has non-finite entries".into()));
        }
        Ok(Self { ids, dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            ids: Vec::new(),
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_vectors(ids: Vec<String>, vectors: &[FeatureVector]) -> Result<Self> {
        let dim = vectors.first().map_or(0, FeatureVector::dim);
        if ids.len() != vectors.len() {
            return Err(CcplError::ManifestMismatch {
                manifest: ids.len(),
                count: vectors.len(),
            });
        }
        if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
            return Err(CcplError::DimensionMismatch {
                left: dim.to_string(),
                right: v.dim().to_string(),
            });
        }
        let data = vectors.iter().flat_map(|v| v.values().iter().map(|&x| x as f32)).collect();
        Self::new(ids, dim, data)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, i: usize) -> Result<FeatureVector> {
        FeatureVector::new(self.row(i).iter().map(|&v| f64::from(v)).collect())
    }

    /// Row tagged with `id`, if present.
    pub fn find(&self, id: &str) -> Option<FeatureVector> {
        let i = self.ids.iter().position(|x| x == id)?;
        self.vector(i).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdConfig {
    pub beta: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { beta: 0.5 }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(CcplError::InvalidParameter(format!("beta {} outside [0, 1]", self.beta)));
        }
        Ok(())
    }
}

pub(crate) fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(CcplError::DimensionMismatch {
            left: a.len().to_string(),
            right: b.len().to_string(),
        });
    }
    Ok(())
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    check_dims(a.values(), b.values())?;
    Ok(cosine(a.values(), b.values()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdBreakdown {
    #[serde(rename = "L_cos")]
    pub l_cos: f64,
    #[serde(rename = "L_L2")]
    pub l_l2: f64,
    #[serde(rename = "L_fd")]
    pub l_fd: f64,
}

/// `β·(1 − cos) + (1 − β)·‖f_g − f_r‖²`.
pub fn feature_distillation_loss(
    f_g: &FeatureVector,
    f_r: &FeatureVector,
    cfg: &FdConfig,
) -> Result<FdBreakdown> {
    check_dims(f_g.values(), f_r.values())?;
    let l_cos = 1.0 - cosine(f_g.values(), f_r.values());
    let l_l2 = squared_distance(f_g.values(), f_r.values());
    Ok(FdBreakdown {
        l_cos,
        l_l2,
        l_fd: cfg.beta * l_cos + (1.0 - cfg.beta) * l_l2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let f = fv(&[0.3, -1.2, 4.0]);
        assert!((cosine_similarity(&f, &f).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(), 0.0);
        assert!((cosine_similarity(&f.scaled(3.5), &f).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&fv(&[0.0, 0.0]), &fv(&[1.0, 2.0])).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&fv(&[1.0]), &fv(&[1.0, 2.0])),
            Err(CcplError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn distillation_examples() {
        let cfg = FdConfig::default();
        let f = fv(&[1.0, 2.0, 3.0]);
        assert_eq!(feature_distillation_loss(&f, &f, &cfg).unwrap().l_fd, 0.0);

        let r = feature_distillation_loss(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0]), &cfg).unwrap();
        assert_eq!(r.l_cos, 1.0);
        assert_eq!(r.l_l2, 2.0);
        assert_eq!(r.l_fd, 1.5);

        let cos_only = FdConfig { beta: 1.0 };
        let r = feature_distillation_loss(&f.scaled(2.0), &f, &cos_only).unwrap();
        assert!(r.l_fd.abs() < 1e-15);
    }

    #[test]
    fn invalid_vectors_and_configs() {
        assert!(FeatureVector::new(vec![]).is_err());
        assert!(FeatureVector::new(vec![f64::INFINITY]).is_err());
        assert!(FdConfig { beta: 1.5 }.validate().is_err());
        assert!(FeatureSet::new(vec!["a".into()], 3, vec![0.0; 2]).is_err());
    }

    #[test]
    fn feature_set_lookup() {
        let set = FeatureSet::from_vectors(
            vec!["H".into(), "D".into()],
            &[fv(&[1.0, 2.0]), fv(&[3.0, 4.0])],
        )
        .unwrap();
        assert_eq!(set.find("D").unwrap(), fv(&[3.0, 4.0]));
        assert!(set.find("E").is_none());
        assert_eq!(set.row(0), &[1.0f32, 2.0]);
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|d| {
            (
                proptest::collection::vec(-10.0f64..10.0, d),
                proptest::collection::vec(-10.0f64..10.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn distillation_properties((a, b) in arb_pair(), beta in 0.0f64..=1.0, k in 0.1f64..10.0) {
            let cfg = FdConfig { beta };
            let (fa, fb) = (fv(&a), fv(&b));
            let ab = feature_distillation_loss(&fa, &fb, &cfg).unwrap();
            let ba = feature_distillation_loss(&fb, &fa, &cfg).unwrap();
            prop_assert!(ab.l_fd >= 0.0);
            prop_assert_eq!(ab.l_fd, ba.l_fd);
            prop_assert!((0.0..=2.0).contains(&ab.l_cos));
            let scaled = feature_distillation_loss(&fa.scaled(k), &fb, &cfg).unwrap();
            prop_assert!((scaled.l_cos - ab.l_cos).abs() < 1e-12);
            if fa.norm() > 0.0 {
                prop_assert!(feature_distillation_loss(&fa, &fa, &cfg).unwrap().l_fd.abs() < 1e-12);
            }
        }
    }
}
