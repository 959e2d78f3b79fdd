//! The four generative rating models and their joint log-posterior.
//!
//! Every model draws a grade as a normal variate. The mean is either
//! `t_i + q_i^(m) + b_j + c^(m)` or, with an impression parameter,
//! `mu_ij + q_i^(m) + c^(m)`; the variance is `r + w`, with `r`/`w` either
//! per criterion or shared across criteria.
//!
//! | kind   | mean       | variance          |
//! |--------|------------|-------------------|
//! | CIM    | t + q + b + c | r_im + w_jm    |
//! | CDM    | t + q + b + c | r_i + w_j      |
//! | ImpCIM | mu + q + c    | r_im + w_jm    |
//! | ImpCDM | mu + q + c    | r_i + w_j      |

mod params;
mod posterior;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Observations;

pub use params::ParameterSet;
pub use posterior::{log_likelihood, log_posterior, log_posterior_gradient, log_posterior_with_gradient, log_prior};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "CIM")]
    Cim,
    #[serde(rename = "CDM")]
    Cdm,
    #[serde(rename = "ImpCIM")]
    ImpCim,
    #[serde(rename = "ImpCDM")]
    ImpCdm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Cim, ModelKind::Cdm, ModelKind::ImpCim, ModelKind::ImpCdm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cim => "CIM",
            ModelKind::Cdm => "CDM",
            ModelKind::ImpCim => "ImpCIM",
            ModelKind::ImpCdm => "ImpCDM",
        }
    }

    /// Whether the mean goes through an impression parameter `mu_ij`.
    pub fn has_impression(self) -> bool {
        matches!(self, ModelKind::ImpCim | ModelKind::ImpCdm)
    }

    /// Whether `r` and `w` carry a criterion index.
    pub fn per_criterion_variance(self) -> bool {
        matches!(self, ModelKind::Cim | ModelKind::ImpCim)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown model `{s}` (expected CIM, CDM, ImpCIM or ImpCDM)"))
    }
}

/// Prior settings. Defaults: t ~ N(3, 1); q, b, c ~ N(0, 1);
/// r, w ~ Gamma(shape 2, rate 2); mu ~ N(t + b, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub t_prior_mean: f64,
    pub t_prior_var: f64,
    pub offset_prior_var: f64,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    pub mu_var: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            t_prior_mean: 3.0,
            t_prior_var: 1.0,
            offset_prior_var: 1.0,
            gamma_shape: 2.0,
            gamma_rate: 2.0,
            mu_var: 1.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let checks = [
            ("t_prior_var", self.t_prior_var),
            ("offset_prior_var", self.offset_prior_var),
            ("gamma_shape", self.gamma_shape),
            ("gamma_rate", self.gamma_rate),
            ("mu_var", self.mu_var),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidHyperParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.t_prior_mean.is_finite() {
            return Err(ModelError::InvalidHyperParams("t_prior_mean must be finite".into()));
        }
        Ok(())
    }
}

/// `ln(1 + e^x)`, stable for large |x|.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean of the grade worker `j` gives target `i` on criterion `m`.
pub fn predicted_mean(p: &ParameterSet, i: usize, j: usize, m: usize) -> f64 {
    let base = match p.mu() {
        Some(mu) => mu[i * p.n_workers() + j],
        None => p.t()[i] + p.b()[j],
    };
    base + p.q()[i * p.n_criteria() + m] + p.c()[m]
}

/// Variance `r + w` of that grade, after the softplus transform.
pub fn predicted_variance(p: &ParameterSet, i: usize, j: usize, m: usize) -> f64 {
    let v = p.as_slice();
    softplus(v[p.r_index(i, m)]) + softplus(v[p.w_index(j, m)])
}

/// Random starting point: t ~ N(3, 0.5²); q, b, c ~ N(0, 0.1²);
/// r_raw = w_raw = 0; mu = t_i + b_j + N(0, 0.1²).
pub fn init_parameters(kind: ModelKind, obs: &Observations, seed: u64) -> ParameterSet {
    let (n_t, n_w, n_c) = (obs.n_targets, obs.n_workers, obs.n_criteria);
    let mut p = ParameterSet::zeros(kind, n_t, n_w, n_c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_dist = Normal::new(3.0, 0.5).expect("valid normal");
    let jitter = Normal::new(0.0, 0.1).expect("valid normal");

    for v in p.t_mut() {
        *v = t_dist.sample(&mut rng);
    }
    for v in p.q_mut() {
        *v = jitter.sample(&mut rng);
    }
    for v in p.b_mut() {
        *v = jitter.sample(&mut rng);
    }
    for v in p.c_mut() {
        *v = jitter.sample(&mut rng);
    }
    if kind.has_impression() {
        let t = p.t().to_vec();
        let b = p.b().to_vec();
        let mu = p.mu_mut().expect("impression kind");
        for i in 0..n_t {
            for j in 0..n_w {
                mu[i * n_w + j] = t[i] + b[j] + jitter.sample(&mut rng);
            }
        }
    }
    p
}
