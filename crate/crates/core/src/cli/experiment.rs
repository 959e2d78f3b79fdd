//! Trial-based comparison of models against INDV ground truth.
//!
//! Each trial draws one SIMUL worker subsample (seed `base_seed + k`),
//! fits every requested model on it with the same seed, and scores the
//! estimated potential quality `t` and criterion quality `t + q` by
//! Spearman correlation with the INDV means.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Condition, DatasetError, RatingDataset};
use crate::inference::{fit, OptimizerConfig};
use crate::models::{HyperParams, ModelKind};
use crate::stats::{ground_truth, spearman, GroundTruth, PotentialTruthMode, StatsError};
use crate::synth::{sample_paired, SynthConfig, SynthError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("target `{0}` has SIMUL responses but no INDV ground truth")]
    MissingTruth(String),
}

/// Where INDV and SIMUL responses come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Separate INDV and SIMUL files.
    Files { indv: PathBuf, simul: PathBuf },
    /// One file holding both conditions.
    Combined(PathBuf),
    /// Paired synthetic arms drawn with this config.
    Synthetic(SynthConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub models: Vec<ModelKind>,
    pub n_workers_range: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub optimizer: OptimizerConfig,
    pub hyper: HyperParams,
    pub potential_truth_mode: PotentialTruthMode,
}

impl ExperimentConfig {
    pub fn new(source: DataSource) -> Self {
        Self {
            source,
            models: ModelKind::ALL.to_vec(),
            n_workers_range: (5..=10).collect(),
            trials: 20,
            base_seed: 0,
            optimizer: OptimizerConfig::default(),
            hyper: HyperParams::default(),
            potential_truth_mode: PotentialTruthMode::PooledMean,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidConfig(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.models.is_empty() {
            return bad("no models requested");
        }
        if self.n_workers_range.is_empty() || self.n_workers_range.contains(&0) {
            return bad("n_workers_range values must be at least 1");
        }
        self.optimizer
            .validate()
            .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))?;
        self.hyper
            .validate()
            .map_err(|e| ExperimentError::InvalidConfig(e.to_string()))
    }
}

/// The INDV arm (ground truth) and SIMUL arm (estimation input).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub indv: RatingDataset,
    pub simul: RatingDataset,
}

impl ExperimentData {
    pub fn load(source: &DataSource) -> Result<Self, ExperimentError> {
        let split = |ds: RatingDataset| -> Result<Self, ExperimentError> {
            let indv = ds.filter_condition(Condition::Indv).ok_or(StatsError::EmptyCondition(Condition::Indv))?;
            let simul = ds.filter_condition(Condition::Simul).ok_or(StatsError::EmptyCondition(Condition::Simul))?;
            Ok(Self { indv, simul })
        };
        match source {
            DataSource::Files { indv, simul } => {
                let indv = RatingDataset::load_csv(indv)?;
                let simul = RatingDataset::load_csv(simul)?;
                Ok(Self {
                    indv: indv.filter_condition(Condition::Indv).ok_or(StatsError::EmptyCondition(Condition::Indv))?,
                    simul: simul
                        .filter_condition(Condition::Simul)
                        .ok_or(StatsError::EmptyCondition(Condition::Simul))?,
                })
            }
            DataSource::Combined(path) => split(RatingDataset::load_csv(path)?),
            DataSource::Synthetic(cfg) => {
                let out = sample_paired(cfg)?;
                Ok(Self {
                    indv: out.indv,
                    simul: out.simul,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialOutcome {
    Ok {
        potential: f64,
        criteria: Vec<f64>,
        final_objective: f64,
        converged: bool,
        steps_taken: usize,
    },
    Excluded {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub workers: Vec<String>,
    #[serde(flatten)]
    pub outcome: TrialOutcome,
}

/// Aggregate for one (model, n_workers) cell. Means are `None` when every
/// trial was excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub model: ModelKind,
    pub n_workers: usize,
    pub mean_potential: Option<f64>,
    pub mean_criteria: Option<Vec<f64>>,
    pub excluded: usize,
    pub trials: Vec<TrialRecord>,
}

impl CellReport {
    fn aggregate(model: ModelKind, n_workers: usize, n_criteria: usize, trials: Vec<TrialRecord>) -> Self {
        let ok: Vec<(f64, &[f64])> = trials
            .iter()
            .filter_map(|t| match &t.outcome {
                TrialOutcome::Ok { potential, criteria, .. } => Some((*potential, criteria.as_slice())),
                TrialOutcome::Excluded { .. } => None,
            })
            .collect();
        let excluded = trials.len() - ok.len();
        let (mean_potential, mean_criteria) = if ok.is_empty() {
            (None, None)
        } else {
            let n = ok.len() as f64;
            let pot = ok.iter().map(|(p, _)| p).sum::<f64>() / n;
            let crit = (0..n_criteria)
                .map(|m| ok.iter().map(|(_, c)| c[m]).sum::<f64>() / n)
                .collect();
            (Some(pot), Some(crit))
        };
        Self {
            model,
            n_workers,
            mean_potential,
            mean_criteria,
            excluded,
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    /// Unix seconds at report creation; the only non-deterministic field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<u64>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    pub base_seed: u64,
    pub trials: usize,
    pub potential_truth_mode: PotentialTruthMode,
    pub criteria: Vec<String>,
    /// Ordered by model (as configured), then n_workers (as configured).
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn cell(&self, model: ModelKind, n_workers: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.model == model && c.n_workers == n_workers)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per cell: `Model, Potential, <criteria...>`, model labelled
    /// as `KIND (n=N)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Model,Potential");
        for c in &self.criteria {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "NA".into());
        for n in self.n_workers_in_order() {
            for cell in self.cells.iter().filter(|c| c.n_workers == n) {
                out.push_str(&format!("{} (n={}),{}", cell.model, cell.n_workers, fmt(cell.mean_potential)));
                for m in 0..self.criteria.len() {
                    out.push(',');
                    out.push_str(&fmt(cell.mean_criteria.as_ref().map(|c| c[m])));
                }
                out.push('\n');
            }
        }
        out
    }

    fn n_workers_in_order(&self) -> Vec<usize> {
        let mut seen = Vec::new();
        for c in &self.cells {
            if !seen.contains(&c.n_workers) {
                seen.push(c.n_workers);
            }
        }
        seen
    }
}

/// Seed of trial `k`, shared by the worker subsample and the optimizer.
pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    base_seed.wrapping_add(trial as u64)
}

/// Scores one fitted model against the ground truth.
fn score(
    model: ModelKind,
    sub: &RatingDataset,
    truth: &GroundTruth,
    truth_rows: &[usize],
    truth_cols: &[usize],
    cfg: &ExperimentConfig,
    seed: u64,
) -> TrialOutcome {
    let result = match fit(model, sub, &cfg.hyper, &cfg.optimizer, seed) {
        Ok(r) => r,
        Err(e) => return TrialOutcome::Excluded { reason: e.to_string() },
    };
    let p = &result.params;
    let n_c = sub.n_criteria();
    let truth_potential: Vec<f64> = truth_rows.iter().map(|&i| truth.potential[i]).collect();
    let potential = match spearman(p.t(), &truth_potential) {
        Ok(r) => r,
        Err(e) => return TrialOutcome::Excluded { reason: format!("potential: {e}") },
    };
    let quality = p.criterion_quality();
    let mut criteria = Vec::with_capacity(n_c);
    for (m, &tm) in truth_cols.iter().enumerate() {
        let est: Vec<f64> = (0..sub.n_targets()).map(|i| quality[i * n_c + m]).collect();
        let tr: Vec<f64> = truth_rows.iter().map(|&i| truth.criterion[i][tm]).collect();
        match spearman(&est, &tr) {
            Ok(r) => criteria.push(r),
            Err(e) => {
                return TrialOutcome::Excluded {
                    reason: format!("criterion {}: {e}", sub.criteria()[m]),
                }
            }
        }
    }
    TrialOutcome::Ok {
        potential,
        criteria,
        final_objective: result.final_objective,
        converged: result.converged,
        steps_taken: result.steps_taken,
    }
}

/// Runs the protocol on already-loaded data.
pub fn run_on(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let truth = ground_truth(&data.indv, cfg.potential_truth_mode)?;

    let pool = data.simul.eligible_workers(Condition::Simul).len();
    let largest = *cfg.n_workers_range.iter().max().expect("validated non-empty");
    if pool < largest {
        return Err(DatasetError::NotEnoughEligibleWorkers {
            requested: largest,
            available: pool,
        }
        .into());
    }

    // SIMUL targets/criteria mapped onto the ground-truth indexes
    let lookup = |ids: &[String], within: &[String]| -> Result<Vec<usize>, ExperimentError> {
        ids.iter()
            .map(|id| {
                within
                    .binary_search(id)
                    .map_err(|_| ExperimentError::MissingTruth(id.clone()))
            })
            .collect()
    };
    let truth_rows = lookup(data.simul.targets(), &truth.targets)?;
    let truth_cols = lookup(data.simul.criteria(), &truth.criteria)?;

    let jobs: Vec<(usize, usize)> = cfg
        .n_workers_range
        .iter()
        .flat_map(|&n| (0..cfg.trials).map(move |k| (n, k)))
        .collect();

    // one subsample per (n, trial), shared by every model
    let outcomes: Vec<Result<Vec<TrialRecord>, ExperimentError>> = jobs
        .par_iter()
        .map(|&(n, k)| {
            let seed = trial_seed(cfg.base_seed, k);
            let sub = data.simul.subsample_workers(n, seed, Condition::Simul)?;
            Ok(cfg
                .models
                .iter()
                .map(|&model| TrialRecord {
                    trial: k,
                    seed,
                    workers: sub.workers().to_vec(),
                    outcome: score(model, &sub, &truth, &truth_rows, &truth_cols, cfg, seed),
                })
                .collect())
        })
        .collect();
    let outcomes: Vec<Vec<TrialRecord>> = outcomes.into_iter().collect::<Result<_, _>>()?;

    let n_c = data.simul.n_criteria();
    let mut cells = Vec::with_capacity(cfg.models.len() * cfg.n_workers_range.len());
    for (mi, &model) in cfg.models.iter().enumerate() {
        for (ni, &n) in cfg.n_workers_range.iter().enumerate() {
            let trials: Vec<TrialRecord> = (0..cfg.trials)
                .map(|k| outcomes[ni * cfg.trials + k][mi].clone())
                .collect();
            cells.push(CellReport::aggregate(model, n, n_c, trials));
        }
    }

    Ok(ExperimentReport {
        metadata: ReportMetadata {
            generated_at: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        base_seed: cfg.base_seed,
        trials: cfg.trials,
        potential_truth_mode: cfg.potential_truth_mode,
        criteria: data.simul.criteria().to_vec(),
        cells,
    })
}

/// Loads the configured data and runs the protocol.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    let data = ExperimentData::load(&cfg.source)?;
    run_on(cfg, &data)
}
