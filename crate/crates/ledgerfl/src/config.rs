//! TOML run configuration. Keys mirror `RoundConfig`; unknown keys are
//! rejected.

use std::path::Path;

use ledgerfl_core::aggregate::Aggregator;
use ledgerfl_core::crypto::Backend;
use ledgerfl_core::harness::RoundConfig;

use crate::{io_err, AppError, AppResult};

pub fn parse_config(text: &str, origin: &Path) -> AppResult<RoundConfig> {
    let cfg: RoundConfig = toml::from_str(text).map_err(|e| AppError::Parse {
        path: origin.to_path_buf(),
        reason: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> AppResult<RoundConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text, path)
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub backend: Option<Backend>,
    pub aggregator: Option<Aggregator>,
    pub rounds: Option<usize>,
    pub enterprises: Option<usize>,
    pub alpha: Option<f64>,
    pub mu: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RoundConfig) -> AppResult<()> {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.backend {
            cfg.backend = v;
        }
        if let Some(v) = self.aggregator {
            cfg.aggregator = v;
        }
        if let Some(v) = self.rounds {
            cfg.rounds = v;
        }
        if let Some(v) = self.enterprises {
            cfg.enterprises = v;
            cfg.selected = cfg.selected.min(v);
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.mu {
            cfg.mu = v;
        }
        cfg.validate()?;
        Ok(())
    }
}

pub fn to_toml(cfg: &RoundConfig) -> String {
    toml::to_string(cfg).expect("RoundConfig always serialises")
}
