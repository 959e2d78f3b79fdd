use serde::{Deserialize, Serialize};

use super::hypothesis::{brunner_munzel_test, f_test_two_sided, welch_t_test, TestResult};
use super::moments::{
    grade_distribution, inter_criteria_moments, inter_target_moments, MomentSummary,
};
use super::StatsError;
use crate::dataset::{Condition, RatingDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionPair<T> {
    #[serde(rename = "INDV")]
    pub indv: T,
    #[serde(rename = "SIMUL")]
    pub simul: T,
}

/// INDV-vs-SIMUL comparisons for one grouping. Every test takes the INDV
/// distribution as its first sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingTests {
    /// Variance-ratio F test on the distributions of group means.
    pub means_f_test: TestResult,
    /// Welch t test on the distributions of group variances.
    pub variances_welch: TestResult,
    /// Brunner–Munzel test on the distributions of group variances.
    pub variances_brunner_munzel: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub grade_distribution: ConditionPair<[f64; 5]>,
    pub inter_target: ConditionPair<MomentSummary>,
    pub inter_criteria: ConditionPair<MomentSummary>,
    pub inter_target_tests: GroupingTests,
    pub inter_criteria_tests: GroupingTests,
}

fn compare(indv: &MomentSummary, simul: &MomentSummary) -> Result<GroupingTests, StatsError> {
    Ok(GroupingTests {
        means_f_test: f_test_two_sided(&indv.means, &simul.means)?,
        variances_welch: welch_t_test(&indv.variances, &simul.variances)?,
        variances_brunner_munzel: brunner_munzel_test(&indv.variances, &simul.variances)?,
    })
}

/// Condition whose responses represent the `wanted` arm of `ds`: `wanted`
/// itself when present, otherwise whatever single condition the file holds.
fn arm_condition(ds: &RatingDataset, wanted: Condition) -> Condition {
    if ds.responses_for(wanted).next().is_some() {
        return wanted;
    }
    let other = ds.responses()[0].condition;
    log::warn!("no {wanted} responses in file; using its {other} responses for the {wanted} arm");
    other
}

/// Full INDV-vs-SIMUL bias analysis. The INDV arm is taken from the INDV
/// responses of `indv` and the SIMUL arm from the SIMUL responses of
/// `simul`; a file holding only the other condition is used as a whole.
pub fn bias_report(indv: &RatingDataset, simul: &RatingDataset) -> Result<StatReport, StatsError> {
    let ci = arm_condition(indv, Condition::Indv);
    let cs = arm_condition(simul, Condition::Simul);
    let inter_target = ConditionPair {
        indv: MomentSummary::from_records(&inter_target_moments(indv, ci)),
        simul: MomentSummary::from_records(&inter_target_moments(simul, cs)),
    };
    let inter_criteria = ConditionPair {
        indv: MomentSummary::from_records(&inter_criteria_moments(indv, ci)),
        simul: MomentSummary::from_records(&inter_criteria_moments(simul, cs)),
    };
    Ok(StatReport {
        grade_distribution: ConditionPair {
            indv: grade_distribution(indv, ci)?,
            simul: grade_distribution(simul, cs)?,
        },
        inter_target_tests: compare(&inter_target.indv, &inter_target.simul)?,
        inter_criteria_tests: compare(&inter_criteria.indv, &inter_criteria.simul)?,
        inter_target,
        inter_criteria,
    })
}
