//! Config resolution: defaults, then the JSON file, then command-line flags.

use std::path::Path;

use ccpl_core::fit::IntensityPath;
use ccpl_core::CcplConfig;
use clap::Args;

use crate::error::Result;

pub fn load_config(path: Option<&Path>) -> Result<CcplConfig> {
    match path {
        Some(p) => {
            log::info!("loading config from {}", p.display());
            Ok(CcplConfig::from_json_file(p)?)
        }
        None => Ok(CcplConfig::default()),
    }
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(r)?, parse(c)?))
}

/// Overrides for the loss configuration.
#[derive(Args, Clone, Debug, Default)]
pub struct LossArgs {
    /// H-channel weight in the dual perception loss
    #[arg(long)]
    pub alpha_weight: Option<f64>,
    /// Block grid for channel statistics, e.g. 8x8
    #[arg(long, value_parser = parse_grid)]
    pub block_grid: Option<(usize, usize)>,
    #[arg(long)]
    pub n_bins: Option<usize>,
    #[arg(long)]
    pub fod_threshold_h: Option<f64>,
    #[arg(long)]
    pub fod_threshold_d: Option<f64>,
    #[arg(long)]
    pub fod_exponent_h: Option<f64>,
    #[arg(long)]
    pub fod_exponent_d: Option<f64>,
    /// Cosine weight in the feature distillation loss
    #[arg(long)]
    pub beta: Option<f64>,
    /// Distance weight in the channel correlation
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Squared-gap weight in the cross-channel loss
    #[arg(long)]
    pub theta: Option<f64>,
    /// Compare per-coordinate correlation profiles
    #[arg(long)]
    pub vector_mode: bool,
}

impl LossArgs {
    pub fn apply(&self, cfg: &mut CcplConfig) {
        if let Some(v) = self.alpha_weight {
            cfg.dcp.alpha_weight = v;
        }
        if let Some((r, c)) = self.block_grid {
            cfg.dcp.block_rows = r;
            cfg.dcp.block_cols = c;
        }
        if let Some(v) = self.n_bins {
            cfg.dcp.n_bins = v;
        }
        if let Some(v) = self.fod_threshold_h {
            cfg.fod_h.threshold = v;
        }
        if let Some(v) = self.fod_threshold_d {
            cfg.fod_d.threshold = v;
        }
        if let Some(v) = self.fod_exponent_h {
            cfg.fod_h.exponent = v;
        }
        if let Some(v) = self.fod_exponent_d {
            cfg.fod_d.exponent = v;
        }
        if let Some(v) = self.beta {
            cfg.fd.beta = v;
        }
        if let Some(v) = self.gamma {
            cfg.nmcc.gamma = v;
        }
        if let Some(v) = self.theta {
            cfg.nmcc.theta = v;
        }
        if self.vector_mode {
            cfg.nmcc.vector_mode = true;
        }
    }
}

/// Overrides for the objective weights and optimiser.
#[derive(Args, Clone, Debug, Default)]
pub struct FitArgs {
    #[arg(long)]
    pub lambda_pix: Option<f64>,
    #[arg(long)]
    pub lambda_dual: Option<f64>,
    #[arg(long)]
    pub lambda_fd: Option<f64>,
    #[arg(long)]
    pub lambda_cross: Option<f64>,
    #[arg(long)]
    pub lambda_ssim: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub step_size: Option<f64>,
    /// Central-difference probe offset
    #[arg(long)]
    pub fd_step: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Evaluate the objective on rounded 8-bit intensities
    #[arg(long)]
    pub quantized: bool,
}

impl FitArgs {
    pub fn apply(&self, cfg: &mut CcplConfig) {
        let f = &mut cfg.fit;
        let w = &mut f.weights;
        for (slot, v) in [
            (&mut w.pix, self.lambda_pix),
            (&mut w.dual, self.lambda_dual),
            (&mut w.fd, self.lambda_fd),
            (&mut w.cross, self.lambda_cross),
            (&mut w.ssim, self.lambda_ssim),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(v) = self.max_iters {
            f.max_iters = v;
        }
        if let Some(v) = self.step_size {
            f.step_size = v;
        }
        if let Some(v) = self.fd_step {
            f.fd_step = v;
        }
        if let Some(v) = self.tolerance {
            f.tolerance = v;
        }
        if self.quantized {
            f.path = IntensityPath::Quantized;
        }
    }
}
