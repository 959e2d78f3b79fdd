//! End-to-end INDV-vs-SIMUL bias analysis from files.

use std::path::Path;

use thiserror::Error;

use crate::dataset::{DatasetError, RatingDataset};
use crate::stats::{bias_report, StatReport, StatsError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Loads both files, computes the bias report and writes it as JSON to
/// `out_path` (when given). The report is returned either way.
pub fn run_bias_analysis(
    indv_path: &Path,
    simul_path: &Path,
    out_path: Option<&Path>,
) -> Result<StatReport, AnalysisError> {
    let indv = RatingDataset::load_csv(indv_path)?;
    let simul = RatingDataset::load_csv(simul_path)?;
    let report = bias_report(&indv, &simul)?;
    if let Some(out) = out_path {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(out, text).map_err(|source| AnalysisError::Io {
            path: out.display().to_string(),
            source,
        })?;
    }
    Ok(report)
}
