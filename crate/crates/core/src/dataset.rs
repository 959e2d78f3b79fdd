//! Rating data model: responses, validated datasets, CSV I/O and worker
//! subsampling.
//!
//! A [`RatingDataset`] is immutable once built. Its three indexes (workers,
//! targets, criteria) are sorted lexicographically so two datasets holding
//! the same responses compare equal regardless of the order they were read in.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CSV_HEADER: &str = "worker_id,target_id,criterion_id,grade,condition";

pub const MIN_GRADE: u8 = 1;
pub const MAX_GRADE: u8 = 5;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header: expected `{CSV_HEADER}`, found `{found}`")]
    BadHeader { found: String },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: grade {grade} outside 1..=5")]
    GradeOutOfRange { line: usize, grade: i64 },
    #[error("line {line}: duplicate response for ({worker}, {target}, {criterion}, {condition})")]
    DuplicateResponse {
        line: usize,
        worker: String,
        target: String,
        criterion: String,
        condition: Condition,
    },
    #[error("line {line}: unknown condition `{value}` (expected INDV or SIMUL)")]
    UnknownCondition { line: usize, value: String },
    #[error("dataset has no responses")]
    Empty,
    #[error("only {available} eligible workers, {requested} requested")]
    NotEnoughEligibleWorkers { requested: usize, available: usize },
}

/// Data-collection condition: each criterion rated in its own task (INDV)
/// or all criteria of a target rated in one task (SIMUL).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "INDV")]
    Indv,
    #[serde(rename = "SIMUL")]
    Simul,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Indv => "INDV",
            Condition::Simul => "SIMUL",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "INDV" => Ok(Condition::Indv),
            "SIMUL" => Ok(Condition::Simul),
            other => Err(other.to_string()),
        }
    }
}

/// One Likert grade given by a worker to a target on a criterion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Response {
    pub worker_id: String,
    pub target_id: String,
    pub criterion_id: String,
    pub grade: u8,
    pub condition: Condition,
}

impl Response {
    pub fn new(
        worker_id: impl Into<String>,
        target_id: impl Into<String>,
        criterion_id: impl Into<String>,
        grade: u8,
        condition: Condition,
    ) -> Self {
        Self {
            worker_id: worker_id.into(),
            target_id: target_id.into(),
            criterion_id: criterion_id.into(),
            grade,
            condition,
        }
    }

    fn key(&self) -> (&str, &str, &str, Condition) {
        (
            &self.worker_id,
            &self.target_id,
            &self.criterion_id,
            self.condition,
        )
    }
}

/// A single observation in dense index coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub target: usize,
    pub worker: usize,
    pub criterion: usize,
    pub value: f64,
}

/// Dense view of a dataset used by the numerical code.
///
/// `pair_observed[i * n_workers + j]` is true when worker `j` rated target
/// `i` on at least one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub n_targets: usize,
    pub n_workers: usize,
    pub n_criteria: usize,
    pub items: Vec<Observation>,
    pub pair_observed: Vec<bool>,
}

impl Observations {
    pub fn new(
        n_targets: usize,
        n_workers: usize,
        n_criteria: usize,
        items: Vec<Observation>,
    ) -> Self {
        let mut pair_observed = vec![false; n_targets * n_workers];
        for o in &items {
            pair_observed[o.target * n_workers + o.worker] = true;
        }
        Self {
            n_targets,
            n_workers,
            n_criteria,
            items,
            pair_observed,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Validated, immutable set of responses with deterministic indexes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingDataset {
    responses: Vec<Response>,
    workers: Vec<String>,
    targets: Vec<String>,
    criteria: Vec<String>,
}

impl RatingDataset {
    /// Builds a dataset, checking grades and the uniqueness of
    /// (worker, target, criterion, condition).
    pub fn from_responses(responses: Vec<Response>) -> Result<Self, DatasetError> {
        let lines: Vec<usize> = (0..responses.len()).collect();
        Self::build(responses, &lines)
    }

    fn build(mut responses: Vec<Response>, lines: &[usize]) -> Result<Self, DatasetError> {
        if responses.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut seen = HashSet::with_capacity(responses.len());
        for (r, &line) in responses.iter().zip(lines) {
            if !(MIN_GRADE..=MAX_GRADE).contains(&r.grade) {
                return Err(DatasetError::GradeOutOfRange {
                    line,
                    grade: i64::from(r.grade),
                });
            }
            if !seen.insert(r.key()) {
                return Err(DatasetError::DuplicateResponse {
                    line,
                    worker: r.worker_id.clone(),
                    target: r.target_id.clone(),
                    criterion: r.criterion_id.clone(),
                    condition: r.condition,
                });
            }
        }
        drop(seen);
        responses.sort();

        let workers = sorted_unique(responses.iter().map(|r| r.worker_id.as_str()));
        let targets = sorted_unique(responses.iter().map(|r| r.target_id.as_str()));
        let criteria = sorted_unique(responses.iter().map(|r| r.criterion_id.as_str()));
        Ok(Self {
            responses,
            workers,
            targets,
            criteria,
        })
    }

    pub fn responses(&self) -> &[Response] {
        &self.responses
    }

    pub fn workers(&self) -> &[String] {
        &self.workers
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn criteria(&self) -> &[String] {
        &self.criteria
    }

    pub fn n_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn n_criteria(&self) -> usize {
        self.criteria.len()
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn worker_index(&self, id: &str) -> Option<usize> {
        self.workers.binary_search_by(|w| w.as_str().cmp(id)).ok()
    }

    pub fn target_index(&self, id: &str) -> Option<usize> {
        self.targets.binary_search_by(|t| t.as_str().cmp(id)).ok()
    }

    pub fn criterion_index(&self, id: &str) -> Option<usize> {
        self.criteria.binary_search_by(|c| c.as_str().cmp(id)).ok()
    }

    /// Responses recorded under `condition`.
    pub fn responses_for(&self, condition: Condition) -> impl Iterator<Item = &Response> {
        self.responses.iter().filter(move |r| r.condition == condition)
    }

    /// Restriction of the dataset to one condition, or `None` if that
    /// condition has no responses.
    pub fn filter_condition(&self, condition: Condition) -> Option<RatingDataset> {
        let kept: Vec<Response> = self.responses_for(condition).cloned().collect();
        if kept.is_empty() {
            None
        } else {
            let lines = vec![0; kept.len()];
            Some(Self::build(kept, &lines).expect("subset of a valid dataset"))
        }
    }

    /// Every response as a dense observation, irrespective of condition.
    pub fn observations(&self) -> Observations {
        let items = self
            .responses
            .iter()
            .map(|r| Observation {
                target: self.target_index(&r.target_id).expect("indexed"),
                worker: self.worker_index(&r.worker_id).expect("indexed"),
                criterion: self.criterion_index(&r.criterion_id).expect("indexed"),
                value: f64::from(r.grade),
            })
            .collect();
        Observations::new(self.n_targets(), self.n_workers(), self.n_criteria(), items)
    }

    pub fn parse_csv(text: &str) -> Result<Self, DatasetError> {
        let mut lines = text.split('\n').enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l.strip_suffix('\r').unwrap_or(l))
            .unwrap_or("");
        let header = header.strip_prefix('\u{feff}').unwrap_or(header);
        if header != CSV_HEADER {
            return Err(DatasetError::BadHeader {
                found: header.to_string(),
            });
        }

        let mut responses = Vec::new();
        let mut line_numbers = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let row = raw.strip_suffix('\r').unwrap_or(raw);
            if row.is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != 5 {
                return Err(DatasetError::MalformedRow {
                    line,
                    reason: format!("expected 5 columns, found {}", fields.len()),
                });
            }
            for (name, value) in ["worker_id", "target_id", "criterion_id"]
                .iter()
                .zip(&fields[..3])
            {
                if value.is_empty() {
                    return Err(DatasetError::MalformedRow {
                        line,
                        reason: format!("empty {name}"),
                    });
                }
            }
            let grade: i64 = fields[3].trim().parse().map_err(|_| DatasetError::MalformedRow {
                line,
                reason: format!("grade `{}` is not an integer", fields[3]),
            })?;
            if !(i64::from(MIN_GRADE)..=i64::from(MAX_GRADE)).contains(&grade) {
                return Err(DatasetError::GradeOutOfRange { line, grade });
            }
            let condition: Condition =
                fields[4]
                    .trim()
                    .parse()
                    .map_err(|value| DatasetError::UnknownCondition { line, value })?;
            responses.push(Response::new(
                fields[0],
                fields[1],
                fields[2],
                grade as u8,
                condition,
            ));
            line_numbers.push(line);
        }
        Self::build(responses, &line_numbers)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_csv(&text)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(32 * (self.responses.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.responses {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.worker_id, r.target_id, r.criterion_id, r.grade, r.condition
            ));
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Merges two datasets (e.g. an INDV file and a SIMUL file).
    pub fn merge(&self, other: &RatingDataset) -> Result<Self, DatasetError> {
        let mut all = self.responses.clone();
        all.extend(other.responses.iter().cloned());
        Self::from_responses(all)
    }

    /// Workers whose `condition` responses cover every (target, criterion)
    /// pair present in the dataset, in index order.
    pub fn eligible_workers(&self, condition: Condition) -> Vec<String> {
        let pairs: BTreeSet<(&str, &str)> = self
            .responses
            .iter()
            .map(|r| (r.target_id.as_str(), r.criterion_id.as_str()))
            .collect();
        let mut covered: BTreeMap<&str, BTreeSet<(&str, &str)>> = BTreeMap::new();
        for r in self.responses_for(condition) {
            covered
                .entry(r.worker_id.as_str())
                .or_default()
                .insert((r.target_id.as_str(), r.criterion_id.as_str()));
        }
        covered
            .into_iter()
            .filter(|(_, set)| set.len() == pairs.len())
            .map(|(w, _)| w.to_string())
            .collect()
    }

    /// Draws `n` fully-covering workers uniformly without replacement and
    /// keeps only their `condition` responses.
    pub fn subsample_workers(
        &self,
        n: usize,
        seed: u64,
        condition: Condition,
    ) -> Result<RatingDataset, DatasetError> {
        let pool = self.eligible_workers(condition);
        if n == 0 || pool.len() < n {
            return Err(DatasetError::NotEnoughEligibleWorkers {
                requested: n,
                available: pool.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chosen: HashSet<&str> = index::sample(&mut rng, pool.len(), n)
            .into_iter()
            .map(|k| pool[k].as_str())
            .collect();
        let kept: Vec<Response> = self
            .responses_for(condition)
            .filter(|r| chosen.contains(r.worker_id.as_str()))
            .cloned()
            .collect();
        Self::from_responses(kept)
    }
}

fn sorted_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    ids.collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn csv(rows: &[&str]) -> String {
        let mut s = String::from(CSV_HEADER);
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s.push('\n');
        s
    }

    fn full_pool(workers: usize, targets: usize, criteria: usize) -> RatingDataset {
        let mut rs = Vec::new();
        for w in 0..workers {
            for t in 0..targets {
                for c in 0..criteria {
                    rs.push(Response::new(
                        format!("w{w:02}"),
                        format!("t{t}"),
                        format!("c{c}"),
                        ((w + t + c) % 5 + 1) as u8,
                        Condition::Simul,
                    ));
                }
            }
        }
        RatingDataset::from_responses(rs).unwrap()
    }

    #[test]
    fn loads_two_rows() {
        let ds = RatingDataset::parse_csv(&csv(&[
            "w1,t1,coherence,3,SIMUL",
            "w1,t1,overall,4,SIMUL",
        ]))
        .unwrap();
        assert_eq!(ds.n_workers(), 1);
        assert_eq!(ds.n_targets(), 1);
        assert_eq!(ds.n_criteria(), 2);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.criteria(), ["coherence", "overall"]);
    }

    #[test]
    fn grade_six_is_rejected() {
        let err = RatingDataset::parse_csv(&csv(&["w1,t1,coherence,6,SIMUL"])).unwrap_err();
        assert!(matches!(err, DatasetError::GradeOutOfRange { line: 2, grade: 6 }));
        let err = RatingDataset::parse_csv(&csv(&["w1,t1,coherence,0,SIMUL"])).unwrap_err();
        assert!(matches!(err, DatasetError::GradeOutOfRange { grade: 0, .. }));
    }

    #[test]
    fn row_order_does_not_matter() {
        let a = RatingDataset::parse_csv(&csv(&[
            "w2,t1,coherence,3,SIMUL",
            "w1,t2,overall,4,INDV",
            "w1,t1,overall,5,SIMUL",
        ]))
        .unwrap();
        let b = RatingDataset::parse_csv(&csv(&[
            "w1,t1,overall,5,SIMUL",
            "w1,t2,overall,4,INDV",
            "w2,t1,coherence,3,SIMUL",
        ]))
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_rows() {
        let err = RatingDataset::parse_csv(&csv(&["w1,t1,coherence,3"])).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedRow { .. }));
        let err = RatingDataset::parse_csv(&csv(&["w1,t1,coh,erence,3,SIMUL"])).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedRow { .. }));
        let err = RatingDataset::parse_csv(&csv(&["w1,t1,coherence,3.5,SIMUL"])).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedRow { .. }));
        let err = RatingDataset::parse_csv(&csv(&["w1,t1,coherence,3,BOTH"])).unwrap_err();
        assert!(matches!(err, DatasetError::UnknownCondition { .. }));
        let err = RatingDataset::parse_csv("worker,target\n").unwrap_err();
        assert!(matches!(err, DatasetError::BadHeader { .. }));
        let err = RatingDataset::parse_csv(&csv(&[])).unwrap_err();
        assert!(matches!(err, DatasetError::Empty));
    }

    #[test]
    fn duplicates_rejected_but_conditions_distinct() {
        let err = RatingDataset::parse_csv(&csv(&[
            "w1,t1,coherence,3,SIMUL",
            "w1,t1,coherence,4,SIMUL",
        ]))
        .unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateResponse { line: 3, .. }));
        let ok = RatingDataset::parse_csv(&csv(&[
            "w1,t1,coherence,3,SIMUL",
            "w1,t1,coherence,4,INDV",
        ]));
        assert!(ok.is_ok());
    }

    #[test]
    fn crlf_accepted() {
        let text = format!("{CSV_HEADER}\r\nw1,t1,c,3,INDV\r\n");
        let ds = RatingDataset::parse_csv(&text).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.responses()[0].condition, Condition::Indv);
    }

    #[test]
    fn subsample_from_nineteen() {
        let ds = full_pool(19, 4, 3);
        for seed in 0..10 {
            let sub = ds.subsample_workers(5, seed, Condition::Simul).unwrap();
            assert_eq!(sub.n_workers(), 5);
            for w in sub.workers() {
                let n = sub.responses().iter().filter(|r| &r.worker_id == w).count();
                assert_eq!(n, 4 * 3);
            }
        }
    }

    #[test]
    fn exhaustive_draw_ignores_seed() {
        let ds = full_pool(6, 2, 2);
        let a = ds.subsample_workers(6, 1, Condition::Simul).unwrap();
        let b = ds.subsample_workers(6, 999, Condition::Simul).unwrap();
        assert_eq!(a, ds);
        assert_eq!(b, ds);
    }

    #[test]
    fn seeds_reach_every_subset() {
        let ds = full_pool(6, 2, 2);
        let same_a = ds.subsample_workers(5, 42, Condition::Simul).unwrap();
        let same_b = ds.subsample_workers(5, 42, Condition::Simul).unwrap();
        assert_eq!(same_a.workers(), same_b.workers());

        // 6 choose 5 = 6 subsets; 100 uniform draws miss one with
        // probability about 6 * (5/6)^100, i.e. never in practice.
        let subsets: BTreeSet<Vec<String>> = (0..100)
            .map(|s| {
                ds.subsample_workers(5, s, Condition::Simul)
                    .unwrap()
                    .workers()
                    .to_vec()
            })
            .collect();
        assert_eq!(subsets.len(), 6);
    }

    #[test]
    fn partial_coverage_workers_are_ineligible() {
        let mut rs = full_pool(3, 2, 2).responses().to_vec();
        rs.push(Response::new("w99", "t0", "c0", 3, Condition::Simul));
        let ds = RatingDataset::from_responses(rs).unwrap();
        assert_eq!(ds.eligible_workers(Condition::Simul).len(), 3);
        assert!(ds.eligible_workers(Condition::Indv).is_empty());
        let err = ds.subsample_workers(4, 0, Condition::Simul).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::NotEnoughEligibleWorkers {
                requested: 4,
                available: 3
            }
        ));
    }

    #[test]
    fn observations_mark_pairs() {
        let ds = RatingDataset::parse_csv(&csv(&["w1,t1,a,3,SIMUL", "w2,t2,b,1,SIMUL"])).unwrap();
        let obs = ds.observations();
        assert_eq!(obs.len(), 2);
        assert_eq!(obs.pair_observed, vec![true, false, false, true]);
    }

    fn arb_responses() -> impl Strategy<Value = Vec<Response>> {
        proptest::collection::btree_map(
            (0u8..4, 0u8..4, 0u8..3, prop::bool::ANY),
            1u8..=5,
            1..40,
        )
        .prop_map(|m| {
            m.into_iter()
                .map(|((w, t, c, simul), g)| {
                    Response::new(
                        format!("w{w}"),
                        format!("t{t}"),
                        format!("c{c}"),
                        g,
                        if simul { Condition::Simul } else { Condition::Indv },
                    )
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(rs in arb_responses()) {
            let ds = RatingDataset::from_responses(rs).unwrap();
            let back = RatingDataset::parse_csv(&ds.to_csv_string()).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn subsample_is_sub_multiset(seed in any::<u64>(), n in 1usize..=5) {
            let ds = full_pool(5, 3, 2);
            let sub = ds.subsample_workers(n, seed, Condition::Simul).unwrap();
            let all: HashSet<&Response> = ds.responses().iter().collect();
            prop_assert!(sub.responses().iter().all(|r| all.contains(r)));
            prop_assert_eq!(sub.n_workers(), n);
        }
    }
}
