//! Bias analysis and evaluation statistics.
//!
//! Grade distributions, inter-criteria / inter-target moments, the
//! two-sample tests used to compare INDV against SIMUL (variance-ratio F,
//! Welch t, Brunner–Munzel), tie-aware Spearman correlation and the
//! INDV-mean ground truth.

mod correlation;
mod hypothesis;
mod moments;
mod report;
pub mod special;
mod truth;

use thiserror::Error;

pub use correlation::{midranks, pearson, spearman};
pub use hypothesis::{brunner_munzel_test, f_test_two_sided, welch_t_test, Df, TestKind, TestResult};
pub use moments::{
    grade_distribution, inter_criteria_moments, inter_target_moments, GroupKey, MomentRecord,
    MomentSummary,
};
pub use report::{bias_report, ConditionPair, GroupingTests, StatReport};
pub use truth::{ground_truth, GroundTruth, PotentialTruthMode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("no responses under condition {0}")]
    EmptyCondition(crate::dataset::Condition),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("constant input: rank correlation undefined")]
    ConstantInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no INDV responses for target `{target}`, criterion `{criterion}`")]
    MissingCoverage { target: String, criterion: String },
    #[error("criterion `{0}` not found for potential ground truth")]
    MissingCriterion(String),
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator).
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}
