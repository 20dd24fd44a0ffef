//! Resolved configuration for every stage, loadable from a single JSON file.
//!
//! Every field has a default, so a JSON file only needs to name the values
//! it overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cross_channel::NmccConfig;
use crate::error::{CcplError, Result};
use crate::features::FdConfig;
use crate::fit::FitConfig;
use crate::fod::{FodChannel, FodParams};
use crate::perception::DcpConfig;
use crate::stain::{StainMatrix, DEFAULT_I0};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcplConfig {
    /// Rows in H, E, D order; normalised to unit length on load.
    pub stain_matrix: StainMatrix,
    pub reference_intensity: f64,
    pub fod_h: FodParams,
    pub fod_d: FodParams,
    pub dcp: DcpConfig,
    pub fd: FdConfig,
    pub nmcc: NmccConfig,
    pub fit: FitConfig,
    pub workers: usize,
    /// Only consumed by sampling-based tooling.
    pub seed: Option<u64>,
}

impl Default for CcplConfig {
    fn default() -> Self {
        Self {
            stain_matrix: StainMatrix::default(),
            reference_intensity: DEFAULT_I0,
            fod_h: FodParams::default_for(FodChannel::H),
            fod_d: FodParams::default_for(FodChannel::D),
            dcp: DcpConfig::default(),
            fd: FdConfig::default(),
            nmcc: NmccConfig::default(),
            fit: FitConfig::default(),
            workers: 1,
            seed: None,
        }
    }
}

impl CcplConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reference_intensity > 0.0 && self.reference_intensity.is_finite()) {
            return Err(CcplError::InvalidParameter(format!(
                "reference intensity must be positive, got {}",
                self.reference_intensity
            )));
        }
        self.fod_h.validate()?;
        self.fod_d.validate()?;
        if self.fod_h.channel != FodChannel::H || self.fod_d.channel != FodChannel::D {
            return Err(CcplError::InvalidParameter(
                "fod_h must use channel H and fod_d channel D".into(),
            ));
        }
        self.dcp.validate()?;
        self.fd.validate()?;
        self.nmcc.validate()?;
        self.fit.validate()?;
        if self.workers == 0 {
            return Err(CcplError::InvalidParameter("workers must be at least 1".into()));
        }
        Ok(())
    }
}
