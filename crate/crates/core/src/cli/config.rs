//! TOML run configuration shared by every subcommand.
//!
//! ```toml
//! [data]
//! path = "ratings.csv"      # one file (fit, validate, combined experiment)
//! indv = "indv.csv"         # or two files for analyze / experiment
//! simul = "simul.csv"
//!
//! [synth]
//! I = 50
//! J = 100
//! M = 5
//! kind = "ImpCDM"
//! seed = 7
//!
//! [optimizer]
//! learning_rate = 0.01
//!
//! [priors]
//! t_prior_mean = 3.0
//!
//! [experiment]
//! models = ["CIM", "ImpCDM"]
//! n_workers_range = [5, 6, 7, 8, 9, 10]
//! trials = 20
//! base_seed = 0
//! potential_truth_mode = "pooled_mean"
//!
//! [fit]
//! model = "ImpCDM"
//! seed = 0
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::experiment::{DataSource, ExperimentConfig};
use crate::inference::OptimizerConfig;
use crate::models::{HyperParams, ModelKind};
use crate::stats::PotentialTruthMode;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub indv: Option<PathBuf>,
    pub simul: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub models: Vec<ModelKind>,
    pub n_workers_range: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub potential_truth_mode: PotentialTruthMode,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.to_vec(),
            n_workers_range: (5..=10).collect(),
            trials: 20,
            base_seed: 0,
            potential_truth_mode: PotentialTruthMode::PooledMean,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub model: Option<ModelKind>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub synth: Option<SynthConfig>,
    pub optimizer: OptimizerConfig,
    pub priors: HyperParams,
    pub experiment: ExperimentSection,
    pub fit: FitSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string().trim_end().replace('\n', " "))
    }

    /// Reads `path` and resolves data paths relative to its directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let mut cfg = Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for p in [&mut cfg.data.path, &mut cfg.data.indv, &mut cfg.data.simul].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Data source for `experiment`: two files, then one combined file,
    /// then the synth section.
    pub fn data_source(&self) -> Option<DataSource> {
        match (&self.data.indv, &self.data.simul, &self.data.path, &self.synth) {
            (Some(indv), Some(simul), _, _) => Some(DataSource::Files {
                indv: indv.clone(),
                simul: simul.clone(),
            }),
            (_, _, Some(path), _) => Some(DataSource::Combined(path.clone())),
            (_, _, _, Some(s)) => Some(DataSource::Synthetic(s.clone())),
            _ => None,
        }
    }

    pub fn experiment_config(&self, source: DataSource) -> ExperimentConfig {
        let e = &self.experiment;
        ExperimentConfig {
            source,
            models: e.models.clone(),
            n_workers_range: e.n_workers_range.clone(),
            trials: e.trials,
            base_seed: e.base_seed,
            optimizer: self.optimizer,
            hyper: self.priors,
            potential_truth_mode: e.potential_truth_mode,
        }
    }
}
