use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evidence::{validate_tau, DEFAULT_TAU};
use crate::identification::{validate_beta, DEFAULT_BETA};
use crate::losses::{LossConfig, Stage, DEFAULT_GAMMA};
use crate::similarity::BranchWeights;
use crate::transport::OTConfig;
use crate::{Error, Result};

/// Every scalar the pipeline uses. Loaded from a TOML file; missing keys
/// take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub tau: f64,
    pub beta: f64,
    pub gamma: f64,
    pub stage: Stage,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default. An execution setting only,
    /// so it is never serialized and reports do not depend on it.
    #[serde(skip_serializing)]
    pub threads: usize,
    /// Treat transport non-convergence as an error.
    pub strict: bool,
    pub ot: OTConfig,
    pub weights: BranchWeights,
    pub loss: LossConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            stage: Stage::Full,
            seed: 0,
            threads: 0,
            strict: false,
            ot: OTConfig::default(),
            weights: BranchWeights::default(),
            loss: LossConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        validate_tau(self.tau)?;
        validate_beta(self.beta)?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        self.ot.validate()?;
        self.weights.validate()?;
        self.loss.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}
