//! Affine optical-density stain-transfer model and its fitting loop.
//!
//! The model maps source OD to generated OD with `od_out = A·od_in + b`,
//! clamped at zero. It is fitted to paired patches by gradient descent on a
//! weighted sum of pixel MSE, the dual-channel perception loss, the feature
//! distillation loss, the cross-channel consistency loss and `1 − SSIM`.
//! Gradients are central differences over the 12 parameters; steps are
//! chosen by backtracking so the accepted objective never increases.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::CcplConfig;
use crate::cross_channel::{nmcc_from_features, ChannelFeatures};
use crate::error::{dims_mismatch, CcplError, Result};
use crate::features::{feature_distillation_loss, FeatureExtractor, FeatureVector, ToyExtractor};
use crate::metrics::{mse, SsimReference};
use crate::perception::{channel_perception_loss, image_channel_stats, ChannelStats, DualBreakdown};
use crate::raster::{RgbImage, RgbImageF, RgbRaster};
use crate::stain::intensity_to_od;

pub const PARAM_COUNT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineOdModel {
    #[serde(rename = "A")]
    pub a: [[f64; 3]; 3],
    pub b: [f64; 3],
}

impl Default for AffineOdModel {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineOdModel {
    pub fn identity() -> Self {
        Self {
            a: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            b: [0.0; 3],
        }
    }

    /// Row-major `A` followed by `b`.
    pub fn params(&self) -> [f64; PARAM_COUNT] {
        let mut p = [0.0; PARAM_COUNT];
        for r in 0..3 {
            p[3 * r..3 * r + 3].copy_from_slice(&self.a[r]);
        }
        p[9..].copy_from_slice(&self.b);
        p
    }

    pub fn from_params(p: &[f64; PARAM_COUNT]) -> Self {
        Self {
            a: std::array::from_fn(|r| std::array::from_fn(|c| p[3 * r + c])),
            b: [p[9], p[10], p[11]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }

    #[inline]
    pub fn map_od(&self, od: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|r| {
            let a = &self.a[r];
            (a[0] * od[0] + a[1] * od[1] + a[2] * od[2] + self.b[r]).max(0.0)
        })
    }

    fn mapped_od(&self, source_od: &[f64]) -> Vec<f64> {
        source_od
            .chunks_exact(3)
            .flat_map(|px| self.map_od([px[0], px[1], px[2]]))
            .collect()
    }
}

/// Applies the model and rounds to 8 bits.
pub fn apply_model<R: RgbRaster>(model: &AffineOdModel, img: &R, i0: f64) -> RgbImage {
    let od = source_od(img, i0);
    RgbImage::from_od(img.width(), img.height(), &model.mapped_od(&od), i0)
}

/// Applies the model without rounding.
pub fn apply_model_continuous<R: RgbRaster>(model: &AffineOdModel, img: &R, i0: f64) -> RgbImageF {
    let od = source_od(img, i0);
    RgbImageF::from_od(img.width(), img.height(), &model.mapped_od(&od), i0)
}

fn source_od<R: RgbRaster>(img: &R, i0: f64) -> Vec<f64> {
    (0..3 * img.pixel_count()).map(|i| intensity_to_od(img.sample(i), i0)).collect()
}

/// How generated intensities are produced while evaluating the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityPath {
    /// Unrounded intensities; keeps finite-difference gradients informative.
    #[default]
    Continuous,
    /// Rounded 8-bit intensities, identical to what [`apply_model`] emits.
    Quantized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub pix: f64,
    pub dual: f64,
    pub fd: f64,
    pub cross: f64,
    pub ssim: f64,
    /// Gradient-penalty weight. Recorded for completeness; no term uses it.
    pub gp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pix: 1.0,
            dual: 1.0,
            fd: 1.0,
            cross: 1.0,
            ssim: 0.05,
            gp: 10.0,
        }
    }
}

impl LossWeights {
    pub fn pixel_only() -> Self {
        Self {
            pix: 1.0,
            dual: 0.0,
            fd: 0.0,
            cross: 0.0,
            ssim: 0.0,
            ..Self::default()
        }
    }

    fn active(&self) -> [f64; 5] {
        [self.pix, self.dual, self.fd, self.cross, self.ssim]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub weights: LossWeights,
    /// Initial trial step.
    pub step_size: f64,
    pub max_iters: usize,
    /// Central-difference probe offset.
    pub fd_step: f64,
    /// Factor applied to the trial step after a rejected step.
    pub shrink: f64,
    /// Factor applied to the step after an accepted one.
    pub growth: f64,
    /// Smallest trial step before the line search gives up.
    pub min_step: f64,
    /// Stop once an accepted step improves the objective by less than this.
    pub tolerance: f64,
    pub path: IntensityPath,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            step_size: 1e-4,
            max_iters: 500,
            fd_step: 1e-4,
            shrink: 0.5,
            growth: 2.0,
            min_step: 1e-14,
            tolerance: 1e-10,
            path: IntensityPath::Continuous,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        for (name, v) in [
            ("pix", w.pix),
            ("dual", w.dual),
            ("fd", w.fd),
            ("cross", w.cross),
            ("ssim", w.ssim),
            ("gp", w.gp),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CcplError::InvalidParameter(format!("weight {name} must be >= 0, got {v}")));
            }
        }
        let positive = [
            ("step_size", self.step_size),
            ("fd_step", self.fd_step),
            ("growth", self.growth),
            ("min_step", self.min_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CcplError::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(CcplError::InvalidParameter(format!(
                "shrink must lie in (0, 1), got {}",
                self.shrink
            )));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(CcplError::InvalidParameter("tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub source: RgbImage,
    pub target: RgbImage,
}

impl TrainingPair {
    pub fn new(source: RgbImage, target: RgbImage) -> Result<Self> {
        if source.dims() != target.dims() {
            return Err(dims_mismatch(source.dims(), target.dims()));
        }
        Ok(Self { source, target })
    }
}

/// Per-term means over pairs. Terms with zero weight are not evaluated and
/// read 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub total: f64,
    pub mse: f64,
    pub dual: f64,
    pub fd: f64,
    pub cross: f64,
    pub ssim: f64,
}

impl ObjectiveBreakdown {
    fn terms(&self) -> [f64; 5] {
        [self.mse, self.dual, self.fd, self.cross, self.ssim]
    }

    pub fn weighted_sum(&self, w: &LossWeights) -> f64 {
        self.terms().iter().zip(w.active()).map(|(t, w)| t * w).sum()
    }
}

struct PreparedPair {
    width: usize,
    height: usize,
    source_od: Vec<f64>,
    target: RgbImageF,
    stats_h: Option<ChannelStats>,
    stats_d: Option<ChannelStats>,
    features: Option<FeatureVector>,
    channel_features: Option<ChannelFeatures>,
    ssim: Option<SsimReference>,
}

/// The composed objective over a fixed set of pairs, with every
/// target-side quantity computed once.
pub struct Objective<'a, X: FeatureExtractor = ToyExtractor> {
    pairs: Vec<PreparedPair>,
    cfg: &'a CcplConfig,
    extractor: X,
}

impl<'a> Objective<'a, ToyExtractor> {
    pub fn new(pairs: &[TrainingPair], cfg: &'a CcplConfig) -> Result<Self> {
        Self::with_extractor(pairs, cfg, ToyExtractor)
    }
}

impl<'a, X: FeatureExtractor> Objective<'a, X> {
    pub fn with_extractor(pairs: &[TrainingPair], cfg: &'a CcplConfig, extractor: X) -> Result<Self> {
        if pairs.is_empty() {
            return Err(CcplError::EmptyPairs);
        }
        cfg.validate()?;
        let w = &cfg.fit.weights;
        let i0 = cfg.reference_intensity;
        let m = &cfg.stain_matrix;
        let prepared = pairs
            .iter()
            .map(|p| {
                if p.source.dims() != p.target.dims() {
                    return Err(dims_mismatch(p.source.dims(), p.target.dims()));
                }
                let target = p.target.to_f64();
                Ok(PreparedPair {
                    width: p.source.width(),
                    height: p.source.height(),
                    source_od: source_od(&p.source, i0),
                    stats_h: (w.dual > 0.0)
                        .then(|| image_channel_stats(&target, &cfg.dcp, &cfg.fod_h, m, i0))
                        .transpose()?,
                    stats_d: (w.dual > 0.0)
                        .then(|| image_channel_stats(&target, &cfg.dcp, &cfg.fod_d, m, i0))
                        .transpose()?,
                    features: (w.fd > 0.0).then(|| extractor.extract(&target)).transpose()?,
                    channel_features: (w.cross > 0.0)
                        .then(|| ChannelFeatures::extract(&target, &extractor, m, i0))
                        .transpose()?,
                    ssim: (w.ssim > 0.0).then(|| SsimReference::new(&target)).transpose()?,
                    target,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            pairs: prepared,
            cfg,
            extractor,
        })
    }

    pub fn config(&self) -> &CcplConfig {
        self.cfg
    }

    fn generate(&self, model: &AffineOdModel, pair: &PreparedPair) -> RgbImageF {
        let i0 = self.cfg.reference_intensity;
        let od = model.mapped_od(&pair.source_od);
        match self.cfg.fit.path {
            IntensityPath::Continuous => RgbImageF::from_od(pair.width, pair.height, &od, i0),
            IntensityPath::Quantized => RgbImage::from_od(pair.width, pair.height, &od, i0).to_f64(),
        }
    }

    fn pair_terms(&self, model: &AffineOdModel, pair: &PreparedPair) -> Result<[f64; 5]> {
        let cfg = self.cfg;
        let (i0, m) = (cfg.reference_intensity, &cfg.stain_matrix);
        let gen = self.generate(model, pair);
        let mut t = [0.0; 5];
        if cfg.fit.weights.pix > 0.0 {
            t[0] = mse(&gen, &pair.target)?;
        }
        if let (Some(sh), Some(sd)) = (&pair.stats_h, &pair.stats_d) {
            let l_h = channel_perception_loss(
                &image_channel_stats(&gen, &cfg.dcp, &cfg.fod_h, m, i0)?,
                sh,
            )?;
            let l_d = channel_perception_loss(
                &image_channel_stats(&gen, &cfg.dcp, &cfg.fod_d, m, i0)?,
                sd,
            )?;
            t[1] = DualBreakdown::combine(l_h, l_d, cfg.dcp.alpha_weight).l_dual;
        }
        if let Some(f_r) = &pair.features {
            t[2] = feature_distillation_loss(&self.extractor.extract(&gen)?, f_r, &cfg.fd)?.l_fd;
        }
        if let Some(real) = &pair.channel_features {
            let gen_features = ChannelFeatures::extract(&gen, &self.extractor, m, i0)?;
            t[3] = nmcc_from_features(&gen_features, real, &cfg.nmcc)?.l_cross;
        }
        if let Some(reference) = &pair.ssim {
            t[4] = 1.0 - reference.score(&gen)?;
        }
        Ok(t)
    }

    pub fn evaluate(&self, model: &AffineOdModel) -> Result<ObjectiveBreakdown> {
        let mut sums = [0.0; 5];
        for pair in &self.pairs {
            let t = self.pair_terms(model, pair)?;
            sums.iter_mut().zip(t).for_each(|(s, v)| *s += v);
        }
        let n = self.pairs.len() as f64;
        let [mse, dual, fd, cross, ssim] = sums.map(|s| s / n);
        let mut b = ObjectiveBreakdown {
            total: 0.0,
            mse,
            dual,
            fd,
            cross,
            ssim,
        };
        b.total = b.weighted_sum(&self.cfg.fit.weights);
        Ok(b)
    }

    pub fn value(&self, params: &[f64; PARAM_COUNT]) -> Result<f64> {
        Ok(self.evaluate(&AffineOdModel::from_params(params))?.total)
    }

    /// Central-difference gradient. The probes run on the current rayon
    /// pool; assembly is in parameter order.
    pub fn gradient(&self, params: &[f64; PARAM_COUNT]) -> Result<[f64; PARAM_COUNT]> {
        let h = self.cfg.fit.fd_step;
        let probes: Vec<f64> = (0..2 * PARAM_COUNT)
            .into_par_iter()
            .map(|k| {
                let mut p = *params;
                p[k / 2] += if k % 2 == 0 { h } else { -h };
                self.value(&p)
            })
            .collect::<Result<_>>()?;
        Ok(std::array::from_fn(|i| (probes[2 * i] - probes[2 * i + 1]) / (2.0 * h)))
    }
}

/// Weighted objective of `model` over `pairs`, using the toy extractor for
/// the feature terms.
pub fn objective(model: &AffineOdModel, pairs: &[TrainingPair], cfg: &CcplConfig) -> Result<ObjectiveBreakdown> {
    Objective::new(pairs, cfg)?.evaluate(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub step: f64,
    pub objective: ObjectiveBreakdown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ZeroObjective,
    ZeroGradient,
    Tolerance,
    LineSearchFloor,
    MaxIterations,
}

/// Objective at the start and after every accepted step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub rows: Vec<TraceRow>,
    pub stop: Option<StopReason>,
}

impl FitTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.objective.total).collect()
    }

    pub fn is_non_increasing(&self) -> bool {
        self.objectives().windows(2).all(|w| w[1] <= w[0])
    }

    pub fn last(&self) -> Option<&ObjectiveBreakdown> {
        self.rows.last().map(|r| &r.objective)
    }
}

/// Gradient descent with backtracking from `init`.
pub fn fit(
    pairs: &[TrainingPair],
    init: &AffineOdModel,
    cfg: &CcplConfig,
) -> Result<(AffineOdModel, FitTrace)> {
    fit_objective(&Objective::new(pairs, cfg)?, init)
}

pub fn fit_objective<X: FeatureExtractor>(
    objective: &Objective<'_, X>,
    init: &AffineOdModel,
) -> Result<(AffineOdModel, FitTrace)> {
    let fc = &objective.config().fit;
    if !init.is_finite() {
        return Err(CcplError::InvalidParameter("initial model has non-finite parameters".into()));
    }
    let mut params = init.params();
    let mut current = objective.evaluate(init)?;
    let mut trace = FitTrace::default();
    trace.rows.push(TraceRow {
        iteration: 0,
        step: 0.0,
        objective: current,
    });
    let mut step = fc.step_size;

    for iteration in 1..=fc.max_iters {
        if current.total == 0.0 {
            trace.stop = Some(StopReason::ZeroObjective);
            break;
        }
        let grad = objective.gradient(&params)?;
        if grad.iter().all(|g| *g == 0.0) {
            trace.stop = Some(StopReason::ZeroGradient);
            break;
        }

        let mut trial = step;
        let accepted = loop {
            let candidate: [f64; PARAM_COUNT] = std::array::from_fn(|i| params[i] - trial * grad[i]);
            let model = AffineOdModel::from_params(&candidate);
            if model.is_finite() {
                let value = objective.evaluate(&model)?;
                if value.total <= current.total {
                    break Some((candidate, value));
                }
            }
            trial *= fc.shrink;
            if trial < fc.min_step {
                break None;
            }
        };
        let Some((candidate, value)) = accepted else {
            trace.stop = Some(StopReason::LineSearchFloor);
            break;
        };

        let improvement = current.total - value.total;
        params = candidate;
        current = value;
        trace.rows.push(TraceRow {
            iteration,
            step: trial,
            objective: current,
        });
        step = trial * fc.growth;
        if improvement < fc.tolerance {
            trace.stop = Some(StopReason::Tolerance);
            break;
        }
    }
    if trace.stop.is_none() {
        trace.stop = Some(StopReason::MaxIterations);
    }
    Ok((AffineOdModel::from_params(&params), trace))
}
