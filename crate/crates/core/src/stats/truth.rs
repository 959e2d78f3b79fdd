use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::dataset::{Condition, RatingDataset};

/// How the per-target "potential" reference value is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialTruthMode {
    /// Mean of every INDV grade for the target, pooled over criteria.
    #[default]
    PooledMean,
    /// Mean of INDV grades on the criterion named "overall" (case-insensitive).
    OverallCriterion,
}

/// Reference quality derived from INDV responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub targets: Vec<String>,
    pub criteria: Vec<String>,
    /// `criterion[i][m]`: mean INDV grade of target i on criterion m.
    pub criterion: Vec<Vec<f64>>,
    pub potential: Vec<f64>,
}

impl GroundTruth {
    pub fn criterion_column(&self, m: usize) -> Vec<f64> {
        self.criterion.iter().map(|row| row[m]).collect()
    }
}

pub fn ground_truth(ds: &RatingDataset, mode: PotentialTruthMode) -> Result<GroundTruth, StatsError> {
    let (n_t, n_c) = (ds.n_targets(), ds.n_criteria());
    let mut sums = vec![vec![0.0; n_c]; n_t];
    let mut counts = vec![vec![0usize; n_c]; n_t];
    for r in ds.responses_for(Condition::Indv) {
        let i = ds.target_index(&r.target_id).expect("indexed");
        let m = ds.criterion_index(&r.criterion_id).expect("indexed");
        sums[i][m] += f64::from(r.grade);
        counts[i][m] += 1;
    }

    let mut criterion = vec![vec![0.0; n_c]; n_t];
    let mut potential = Vec::with_capacity(n_t);
    for i in 0..n_t {
        for m in 0..n_c {
            if counts[i][m] == 0 {
                return Err(StatsError::MissingCoverage {
                    target: ds.targets()[i].clone(),
                    criterion: ds.criteria()[m].clone(),
                });
            }
            criterion[i][m] = sums[i][m] / counts[i][m] as f64;
        }
        potential.push(sums[i].iter().sum::<f64>() / counts[i].iter().sum::<usize>() as f64);
    }

    if mode == PotentialTruthMode::OverallCriterion {
        let m = ds
            .criteria()
            .iter()
            .position(|c| c.eq_ignore_ascii_case("overall"))
            .ok_or_else(|| StatsError::MissingCriterion("overall".into()))?;
        potential = criterion.iter().map(|row| row[m]).collect();
    }

    Ok(GroundTruth {
        targets: ds.targets().to_vec(),
        criteria: ds.criteria().to_vec(),
        criterion,
        potential,
    })
}
