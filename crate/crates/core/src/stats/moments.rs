use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::dataset::{Condition, RatingDataset, MAX_GRADE};

/// Share of each grade 1..=5 among the responses under `condition`;
/// index k holds grade k + 1.
pub fn grade_distribution(ds: &RatingDataset, condition: Condition) -> Result<[f64; 5], StatsError> {
    let mut counts = [0usize; MAX_GRADE as usize];
    for r in ds.responses_for(condition) {
        counts[usize::from(r.grade) - 1] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(StatsError::EmptyCondition(condition));
    }
    Ok(counts.map(|c| c as f64 / total as f64))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "grouping", rename_all = "snake_case")]
pub enum GroupKey {
    /// Inter-criteria group: one worker's grades for one target.
    TargetWorker { target_id: String, worker_id: String },
    /// Inter-target group: one worker's grades on one criterion.
    WorkerCriterion { worker_id: String, criterion_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub group_key: GroupKey,
    pub n: usize,
    pub mean: f64,
    /// Population variance (divides by n).
    pub variance: f64,
}

fn records(groups: BTreeMap<GroupKey, Vec<f64>>) -> Vec<MomentRecord> {
    groups
        .into_iter()
        .filter(|(_, xs)| xs.len() >= 2)
        .map(|(group_key, xs)| {
            let n = xs.len();
            let mean = super::mean(&xs);
            let variance = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            MomentRecord {
                group_key,
                n,
                mean,
                variance,
            }
        })
        .collect()
}

/// Mean and variance over criteria for every (target, worker) pair with at
/// least two graded criteria.
pub fn inter_criteria_moments(ds: &RatingDataset, condition: Condition) -> Vec<MomentRecord> {
    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for r in ds.responses_for(condition) {
        groups
            .entry(GroupKey::TargetWorker {
                target_id: r.target_id.clone(),
                worker_id: r.worker_id.clone(),
            })
            .or_default()
            .push(f64::from(r.grade));
    }
    records(groups)
}

/// Mean and variance over targets for every (worker, criterion) pair with
/// at least two graded targets.
pub fn inter_target_moments(ds: &RatingDataset, condition: Condition) -> Vec<MomentRecord> {
    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for r in ds.responses_for(condition) {
        groups
            .entry(GroupKey::WorkerCriterion {
                worker_id: r.worker_id.clone(),
                criterion_id: r.criterion_id.clone(),
            })
            .or_default()
            .push(f64::from(r.grade));
    }
    records(groups)
}

/// Location and spread of the per-group means and variances.
///
/// SDs use the n - 1 denominator and are zero for fewer than two groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub n_groups: usize,
    pub mean_of_means: f64,
    pub sd_of_means: f64,
    pub mean_of_variances: f64,
    pub sd_of_variances: f64,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl MomentSummary {
    pub fn from_records(records: &[MomentRecord]) -> Self {
        let means: Vec<f64> = records.iter().map(|r| r.mean).collect();
        let variances: Vec<f64> = records.iter().map(|r| r.variance).collect();
        let loc = |xs: &[f64]| if xs.is_empty() { f64::NAN } else { super::mean(xs) };
        let sd = |xs: &[f64]| {
            if xs.len() < 2 {
                0.0
            } else {
                super::sample_variance(xs).sqrt()
            }
        };
        Self {
            n_groups: records.len(),
            mean_of_means: loc(&means),
            sd_of_means: sd(&means),
            mean_of_variances: loc(&variances),
            sd_of_variances: sd(&variances),
            means,
            variances,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Response;

    fn ds(rows: &[(&str, &str, &str, u8)]) -> RatingDataset {
        RatingDataset::from_responses(
            rows.iter()
                .map(|&(w, t, c, g)| Response::new(w, t, c, g, Condition::Simul))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn distribution_counts() {
        let d = ds(&[("w", "a", "c", 3), ("w", "b", "c", 3), ("w", "c", "c", 4), ("w", "d", "c", 5)]);
        assert_eq!(grade_distribution(&d, Condition::Simul).unwrap(), [0.0, 0.0, 0.5, 0.25, 0.25]);
        let d = ds(&[("w", "a", "c", 1), ("v", "a", "c", 1)]);
        assert_eq!(grade_distribution(&d, Condition::Simul).unwrap(), [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            grade_distribution(&d, Condition::Indv),
            Err(StatsError::EmptyCondition(Condition::Indv))
        ));
    }

    #[test]
    fn inter_criteria_groups() {
        let constant: Vec<_> = (0..5).map(|m| ("w", "t", ["a", "b", "c", "d", "e"][m], 3)).collect();
        let rec = inter_criteria_moments(&ds(&constant), Condition::Simul);
        assert_eq!(rec.len(), 1);
        assert_eq!((rec[0].mean, rec[0].variance, rec[0].n), (3.0, 0.0, 5));

        let rec = inter_criteria_moments(
            &ds(&[("w", "t", "a", 2), ("w", "t", "b", 4), ("w", "u", "a", 5)]),
            Condition::Simul,
        );
        // (w, u) produced one answer and is dropped
        assert_eq!(rec.len(), 1);
        assert_eq!((rec[0].mean, rec[0].variance), (3.0, 1.0));
    }

    #[test]
    fn inter_target_groups() {
        let rec = inter_target_moments(
            &ds(&[("w", "t1", "a", 1), ("w", "t2", "a", 3), ("w", "t3", "a", 5), ("w", "t1", "b", 2)]),
            Condition::Simul,
        );
        assert_eq!(rec.len(), 1);
        assert_eq!(rec[0].mean, 3.0);
        assert!((rec[0].variance - 8.0 / 3.0).abs() < 1e-15);

        let mut rows = Vec::new();
        let names = ["w1", "w2", "w3", "t1", "t2", "c1", "c2", "c3", "c4"];
        for w in &names[0..3] {
            for t in &names[3..5] {
                for c in &names[5..9] {
                    rows.push((*w, *t, *c, 3));
                }
            }
        }
        assert_eq!(inter_target_moments(&ds(&rows), Condition::Simul).len(), 3 * 4);
    }
}
