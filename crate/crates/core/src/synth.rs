//! Samplers for the four generative models.
//!
//! Parameters are drawn from the model priors unless overridden, then every
//! (target, worker, criterion) cell gets one normal draw. Grades are the
//! raw draws rounded and clamped to 1..=5.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Condition, DatasetError, Observation, Observations, RatingDataset, Response, MAX_GRADE, MIN_GRADE};
use crate::models::{predicted_mean, predicted_variance, softplus_inv, HyperParams, ModelKind, ParameterSet};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("paired sampling needs an impression model for the SIMUL arm, got {0}")]
    UnsupportedKind(ModelKind),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Explicit generating values. Vectors must match the configured sizes;
/// `r` and `w` fix every target-side / worker-side variance to a constant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthOverrides {
    pub t: Option<Vec<f64>>,
    /// I rows of M values.
    pub q: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub r: Option<f64>,
    pub w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(alias = "I")]
    pub n_targets: usize,
    #[serde(alias = "J")]
    pub n_workers: usize,
    #[serde(alias = "M")]
    pub n_criteria: usize,
    pub kind: ModelKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub truth_overrides: Option<TruthOverrides>,
    /// Variance of mu around t_i + b_j; 1 reproduces the model prior.
    #[serde(default = "default_strength")]
    pub impression_strength: f64,
    #[serde(default = "default_true")]
    pub discretize: bool,
}

fn default_strength() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl SynthConfig {
    pub fn new(n_targets: usize, n_workers: usize, n_criteria: usize, kind: ModelKind, seed: u64) -> Self {
        Self {
            n_targets,
            n_workers,
            n_criteria,
            kind,
            seed,
            truth_overrides: None,
            impression_strength: 1.0,
            discretize: true,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_targets == 0 || self.n_workers == 0 || self.n_criteria == 0 {
            return Err(SynthError::InvalidConfig("I, J and M must be at least 1".into()));
        }
        if !(self.impression_strength >= 0.0 && self.impression_strength.is_finite()) {
            return Err(SynthError::InvalidConfig("impression_strength must be >= 0".into()));
        }
        if let Some(o) = &self.truth_overrides {
            let check = |name: &str, len: Option<usize>, want: usize| match len {
                Some(n) if n != want => Err(SynthError::InvalidConfig(format!("override {name} has {n} values, expected {want}"))),
                _ => Ok(()),
            };
            check("t", o.t.as_ref().map(Vec::len), self.n_targets)?;
            check("b", o.b.as_ref().map(Vec::len), self.n_workers)?;
            check("c", o.c.as_ref().map(Vec::len), self.n_criteria)?;
            if let Some(q) = &o.q {
                check("q", Some(q.len()), self.n_targets)?;
                for row in q {
                    check("q row", Some(row.len()), self.n_criteria)?;
                }
            }
            for (name, v) in [("r", o.r), ("w", o.w)] {
                if matches!(v, Some(x) if !(x > 0.0)) {
                    return Err(SynthError::InvalidConfig(format!("override {name} must be positive")));
                }
            }
        }
        Ok(())
    }

    fn overrides(&self) -> TruthOverrides {
        self.truth_overrides.clone().unwrap_or_default()
    }
}

/// A real-valued draw before discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawResponse {
    pub target: usize,
    pub worker: usize,
    pub criterion: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: RatingDataset,
    pub truth: ParameterSet,
    pub raw: Vec<RawResponse>,
    pub discretize: bool,
}

impl SynthOutput {
    /// Observations to fit: the grades when discretized, the raw draws
    /// otherwise.
    pub fn observations(&self) -> Observations {
        if self.discretize {
            return self.dataset.observations();
        }
        let items = self
            .raw
            .iter()
            .map(|r| Observation {
                target: r.target,
                worker: r.worker,
                criterion: r.criterion,
                value: r.value,
            })
            .collect();
        Observations::new(self.truth.n_targets(), self.truth.n_workers(), self.truth.n_criteria(), items)
    }

    /// Writes the dataset CSV and a `<stem>.truth.json` sidecar next to it.
    pub fn save(&self, csv_path: &Path) -> Result<(), SynthError> {
        self.dataset.save_csv(csv_path)?;
        let sidecar = sidecar_path(csv_path);
        let doc = serde_json::json!({ "truth": &self.truth, "discretize": self.discretize });
        let text = serde_json::to_string_pretty(&doc).expect("truth serializes");
        std::fs::write(&sidecar, text).map_err(|source| SynthError::Io {
            path: sidecar.display().to_string(),
            source,
        })
    }
}

pub fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("synth");
    csv_path.with_file_name(format!("{stem}.truth.json"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedOutput {
    pub indv: RatingDataset,
    pub simul: RatingDataset,
    /// Generating parameters of the SIMUL arm (impression model).
    pub simul_truth: ParameterSet,
    /// Generating parameters of the INDV arm (CIM); shares t, q, b, c with
    /// `simul_truth`.
    pub indv_truth: ParameterSet,
    pub indv_raw: Vec<RawResponse>,
    pub simul_raw: Vec<RawResponse>,
}

/// Zero-padded ids so lexicographic order equals numeric order.
fn ids(prefix: &str, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|k| format!("{prefix}{k:0width$}")).collect()
}

pub fn target_ids(n: usize) -> Vec<String> {
    ids("t", n)
}

pub fn worker_ids(n: usize) -> Vec<String> {
    ids("w", n)
}

pub fn criterion_ids(n: usize) -> Vec<String> {
    ids("c", n)
}

pub fn discretize_grade(raw: f64) -> u8 {
    raw.round().clamp(f64::from(MIN_GRADE), f64::from(MAX_GRADE)) as u8
}

/// Shared location parameters t, q, b, c.
fn draw_locations(cfg: &SynthConfig, h: &HyperParams, rng: &mut ChaCha8Rng, p: &mut ParameterSet) {
    let o = cfg.overrides();
    let t_dist = Normal::new(h.t_prior_mean, h.t_prior_var.sqrt()).expect("valid normal");
    let off = Normal::new(0.0, h.offset_prior_var.sqrt()).expect("valid normal");
    // draw everything so overrides do not shift the random stream
    let t: Vec<f64> = (0..cfg.n_targets).map(|_| t_dist.sample(rng)).collect();
    let q: Vec<f64> = (0..cfg.n_targets * cfg.n_criteria).map(|_| off.sample(rng)).collect();
    let b: Vec<f64> = (0..cfg.n_workers).map(|_| off.sample(rng)).collect();
    let c: Vec<f64> = (0..cfg.n_criteria).map(|_| off.sample(rng)).collect();
    p.t_mut().copy_from_slice(o.t.as_deref().unwrap_or(&t));
    match &o.q {
        Some(rows) => p.q_mut().copy_from_slice(&rows.concat()),
        None => p.q_mut().copy_from_slice(&q),
    }
    p.b_mut().copy_from_slice(o.b.as_deref().unwrap_or(&b));
    p.c_mut().copy_from_slice(o.c.as_deref().unwrap_or(&c));
}

/// Variance and impression parameters for `p.kind()`, given its locations.
fn draw_kind_specific(cfg: &SynthConfig, h: &HyperParams, rng: &mut ChaCha8Rng, p: &mut ParameterSet) {
    let o = cfg.overrides();
    let gamma = Gamma::new(h.gamma_shape, 1.0 / h.gamma_rate).expect("valid gamma");
    for v in p.r_raw_mut() {
        let r = gamma.sample(rng);
        *v = softplus_inv(o.r.unwrap_or(r));
    }
    for v in p.w_raw_mut() {
        let w = gamma.sample(rng);
        *v = softplus_inv(o.w.unwrap_or(w));
    }
    if p.kind().has_impression() {
        let (n_w, sd) = (cfg.n_workers, cfg.impression_strength.sqrt());
        let t = p.t().to_vec();
        let b = p.b().to_vec();
        let mu = p.mu_mut().expect("impression kind");
        for i in 0..cfg.n_targets {
            for j in 0..n_w {
                let z: f64 = StandardNormal.sample(rng);
                mu[i * n_w + j] = t[i] + b[j] + sd * z;
            }
        }
    }
}

fn draw_responses(
    p: &ParameterSet,
    condition: Condition,
    rng: &mut ChaCha8Rng,
) -> Result<(RatingDataset, Vec<RawResponse>), SynthError> {
    let (n_t, n_w, n_c) = (p.n_targets(), p.n_workers(), p.n_criteria());
    let (targets, workers, criteria) = (target_ids(n_t), worker_ids(n_w), criterion_ids(n_c));
    let mut raw = Vec::with_capacity(n_t * n_w * n_c);
    let mut responses = Vec::with_capacity(n_t * n_w * n_c);
    for i in 0..n_t {
        for j in 0..n_w {
            for m in 0..n_c {
                let z: f64 = StandardNormal.sample(rng);
                let value = predicted_mean(p, i, j, m) + predicted_variance(p, i, j, m).sqrt() * z;
                raw.push(RawResponse {
                    target: i,
                    worker: j,
                    criterion: m,
                    value,
                });
                responses.push(Response::new(
                    workers[j].as_str(),
                    targets[i].as_str(),
                    criteria[m].as_str(),
                    discretize_grade(value),
                    condition,
                ));
            }
        }
    }
    Ok((RatingDataset::from_responses(responses)?, raw))
}

/// Samples a complete SIMUL-condition dataset from `cfg.kind`.
pub fn sample(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let h = HyperParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut truth = ParameterSet::zeros(cfg.kind, cfg.n_targets, cfg.n_workers, cfg.n_criteria);
    draw_locations(cfg, &h, &mut rng, &mut truth);
    draw_kind_specific(cfg, &h, &mut rng, &mut truth);
    let (dataset, raw) = draw_responses(&truth, Condition::Simul, &mut rng)?;
    Ok(SynthOutput {
        dataset,
        truth,
        raw,
        discretize: cfg.discretize,
    })
}

/// Samples an INDV arm from CIM and a SIMUL arm from `cfg.kind` (an
/// impression model) over the same workers, targets and location truth.
pub fn sample_paired(cfg: &SynthConfig) -> Result<PairedOutput, SynthError> {
    cfg.validate()?;
    if !cfg.kind.has_impression() {
        return Err(SynthError::UnsupportedKind(cfg.kind));
    }
    let h = HyperParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut simul_truth = ParameterSet::zeros(cfg.kind, cfg.n_targets, cfg.n_workers, cfg.n_criteria);
    draw_locations(cfg, &h, &mut rng, &mut simul_truth);
    let mut indv_truth = ParameterSet::zeros(ModelKind::Cim, cfg.n_targets, cfg.n_workers, cfg.n_criteria);
    indv_truth.t_mut().copy_from_slice(simul_truth.t());
    indv_truth.q_mut().copy_from_slice(simul_truth.q());
    indv_truth.b_mut().copy_from_slice(simul_truth.b());
    indv_truth.c_mut().copy_from_slice(simul_truth.c());

    draw_kind_specific(cfg, &h, &mut rng, &mut simul_truth);
    draw_kind_specific(cfg, &h, &mut rng, &mut indv_truth);
    let (simul, simul_raw) = draw_responses(&simul_truth, Condition::Simul, &mut rng)?;
    let (indv, indv_raw) = draw_responses(&indv_truth, Condition::Indv, &mut rng)?;
    Ok(PairedOutput {
        indv,
        simul,
        simul_truth,
        indv_truth,
        indv_raw,
        simul_raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{grade_distribution, inter_criteria_moments};

    #[test]
    fn deterministic_under_seed() {
        let cfg = SynthConfig::new(4, 5, 3, ModelKind::ImpCdm, 9);
        assert_eq!(sample(&cfg).unwrap(), sample(&cfg).unwrap());
        let other = SynthConfig { seed: 10, ..cfg.clone() };
        assert_ne!(sample(&cfg).unwrap().raw, sample(&other).unwrap().raw);
    }

    #[test]
    fn clamping() {
        assert_eq!(discretize_grade(7.3), 5);
        assert_eq!(discretize_grade(-0.2), 1);
        assert_eq!(discretize_grade(2.5), 3);
        assert_eq!(discretize_grade(2.49), 2);
    }

    #[test]
    fn grades_are_rounded_raw() {
        let out = sample(&SynthConfig::new(6, 7, 4, ModelKind::Cim, 1)).unwrap();
        assert_eq!(out.raw.len(), 6 * 7 * 4);
        let obs = out.dataset.observations();
        let mut grades = vec![0.0; 6 * 7 * 4];
        for o in &obs.items {
            grades[(o.target * 7 + o.worker) * 4 + o.criterion] = o.value;
        }
        for r in &out.raw {
            let k = (r.target * 7 + r.worker) * 4 + r.criterion;
            assert_eq!(grades[k], f64::from(discretize_grade(r.value)));
        }
        assert!(out.dataset.responses().iter().all(|r| (1..=5).contains(&r.grade)));
    }

    #[test]
    fn continuous_mode_exposes_raw() {
        let cfg = SynthConfig {
            discretize: false,
            ..SynthConfig::new(3, 3, 2, ModelKind::Cdm, 4)
        };
        let out = sample(&cfg).unwrap();
        let obs = out.observations();
        assert_eq!(obs.items.iter().map(|o| o.value).collect::<Vec<_>>(), out.raw.iter().map(|r| r.value).collect::<Vec<_>>());
    }

    #[test]
    fn cim_cell_means_match_generator() {
        let (n_t, n_w, n_c) = (50, 200, 5);
        let out = sample(&SynthConfig::new(n_t, n_w, n_c, ModelKind::Cim, 2024)).unwrap();
        let p = &out.truth;
        let b_mean = p.b().iter().sum::<f64>() / n_w as f64;
        let (r, w) = (p.r(), p.w());
        let mut outside = 0;
        for i in 0..n_t {
            for m in 0..n_c {
                let cells: Vec<&RawResponse> = out.raw.iter().filter(|x| x.target == i && x.criterion == m).collect();
                let mean = cells.iter().map(|x| x.value).sum::<f64>() / n_w as f64;
                let var_sum: f64 = (0..n_w).map(|j| r[i * n_c + m] + w[j * n_c + m]).sum();
                let se = var_sum.sqrt() / n_w as f64;
                let expected = p.t()[i] + p.q()[i * n_c + m] + b_mean + p.c()[m];
                if (mean - expected).abs() > 3.0 * se {
                    outside += 1;
                }
            }
        }
        // 3-SE band holds for 99.73% of cells; allow 2% of 250
        assert!(outside <= 5, "{outside} cells outside 3 SE");
    }

    #[test]
    fn paired_arms_share_truth() {
        let out = sample_paired(&SynthConfig::new(5, 8, 3, ModelKind::ImpCdm, 5)).unwrap();
        assert_eq!(out.indv_truth.t(), out.simul_truth.t());
        assert_eq!(out.indv_truth.q(), out.simul_truth.q());
        assert_eq!(out.indv_truth.b(), out.simul_truth.b());
        assert_eq!(out.indv_truth.c(), out.simul_truth.c());
        assert!(out.indv.responses().iter().all(|r| r.condition == Condition::Indv));
        assert!(out.simul.responses().iter().all(|r| r.condition == Condition::Simul));
        assert_eq!(out.indv.workers(), out.simul.workers());
        assert!(matches!(
            sample_paired(&SynthConfig::new(5, 8, 3, ModelKind::Cdm, 5)),
            Err(SynthError::UnsupportedKind(ModelKind::Cdm))
        ));
    }

    #[test]
    fn zero_strength_matches_arm_means() {
        let cfg = SynthConfig {
            impression_strength: 0.0,
            truth_overrides: Some(TruthOverrides {
                r: Some(0.5),
                w: Some(0.5),
                ..TruthOverrides::default()
            }),
            discretize: false,
            ..SynthConfig::new(10, 400, 4, ModelKind::ImpCdm, 77)
        };
        let out = sample_paired(&cfg).unwrap();
        let mean = |xs: &[RawResponse]| xs.iter().map(|x| x.value).sum::<f64>() / xs.len() as f64;
        // both arms are N(t + q + b + c, 1) per cell; 16000 draws each
        let diff = mean(&out.simul_raw) - mean(&out.indv_raw);
        assert!(diff.abs() < 4.0 * (2.0f64 / 16_000.0).sqrt(), "{diff}");
        let mu = out.simul_truth.mu().unwrap();
        for i in 0..10 {
            for j in 0..400 {
                assert_eq!(mu[i * 400 + j], out.simul_truth.t()[i] + out.simul_truth.b()[j]);
            }
        }
    }

    #[test]
    fn simul_arm_has_lower_inter_criteria_variance() {
        let mut lower = 0;
        for seed in 0..20 {
            let out = sample_paired(&SynthConfig::new(20, 30, 5, ModelKind::ImpCdm, seed)).unwrap();
            let avg = |ds: &RatingDataset, c| {
                let rec = inter_criteria_moments(ds, c);
                rec.iter().map(|r| r.variance).sum::<f64>() / rec.len() as f64
            };
            if avg(&out.simul, Condition::Simul) < avg(&out.indv, Condition::Indv) {
                lower += 1;
            }
        }
        assert!(lower >= 16, "{lower}/20");
    }

    #[test]
    fn indv_cell_means_converge_with_many_workers() {
        let (n_t, n_w, n_c) = (5, 1000, 3);
        // worker biases with exact zero mean
        let b: Vec<f64> = (0..n_w).map(|j| if j % 2 == 0 { 0.6 } else { -0.6 }).collect();
        let t = vec![2.0, 2.5, 3.0, 3.5, 4.0];
        let q: Vec<Vec<f64>> = (0..n_t).map(|i| (0..n_c).map(|m| 0.1 * (i as f64 - m as f64)).collect()).collect();
        let c = vec![-0.2, 0.0, 0.3];
        let cfg = SynthConfig {
            truth_overrides: Some(TruthOverrides {
                t: Some(t.clone()),
                q: Some(q.clone()),
                b: Some(b),
                c: Some(c.clone()),
                r: Some(0.05),
                w: Some(0.05),
            }),
            discretize: false,
            ..SynthConfig::new(n_t, n_w, n_c, ModelKind::ImpCdm, 3)
        };
        let out = sample_paired(&cfg).unwrap();
        for i in 0..n_t {
            for m in 0..n_c {
                let cell: Vec<f64> = out
                    .indv_raw
                    .iter()
                    .filter(|x| x.target == i && x.criterion == m)
                    .map(|x| x.value)
                    .collect();
                let mean = cell.iter().sum::<f64>() / cell.len() as f64;
                assert!((mean - (t[i] + q[i][m] + c[m])).abs() < 0.05, "cell ({i},{m}): {mean}");
            }
        }
    }

    #[test]
    fn uniform_grade_law_of_large_numbers() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rs: Vec<Response> = (0..100_000)
            .map(|k| Response::new(format!("w{k}"), "t", "c", rng.random_range(1..=5u8), Condition::Simul))
            .collect();
        let ds = RatingDataset::from_responses(rs).unwrap();
        let dist = grade_distribution(&ds, Condition::Simul).unwrap();
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(dist.iter().all(|p| (p - 0.2).abs() < 0.01), "{dist:?}");
    }

    #[test]
    fn invalid_configs() {
        assert!(sample(&SynthConfig::new(0, 1, 1, ModelKind::Cim, 0)).is_err());
        let cfg = SynthConfig {
            truth_overrides: Some(TruthOverrides {
                t: Some(vec![3.0]),
                ..TruthOverrides::default()
            }),
            ..SynthConfig::new(2, 1, 1, ModelKind::Cim, 0)
        };
        assert!(matches!(sample(&cfg), Err(SynthError::InvalidConfig(_))));
    }
}
