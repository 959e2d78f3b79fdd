//! MAP fitting: full-batch Adam ascent on the log-posterior, with
//! independent restarts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Observations, RatingDataset};
use crate::models::{init_parameters, log_posterior, log_posterior_with_gradient, HyperParams, ModelError, ModelKind, ParameterSet};

/// Objective change is measured between step k and step k - WINDOW.
pub const CONVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("vector lengths differ: {params} parameters, {grads} gradients, {state} moments")]
    LengthMismatch { params: usize, grads: usize, state: usize },
    #[error("objective became non-finite at step {step} (seed {seed}); try a smaller learning_rate")]
    NonFiniteObjective { step: usize, seed: u64 },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("dataset has no observations")]
    EmptyData,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_steps: usize,
    pub convergence_tol: f64,
    pub restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_steps: 5000,
            convergence_tol: 1e-6,
            restarts: 20,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |msg: &str| Err(InferenceError::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return bad("beta1 must lie in (0, 1)");
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta2 must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if self.restarts == 0 {
            return bad("restarts must be positive");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence_tol must be non-negative");
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, ascending along `grads`.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &OptimizerConfig,
) -> Result<(), InferenceError> {
    if params.len() != grads.len() || params.len() != state.m.len() || state.m.len() != state.v.len() {
        return Err(InferenceError::LengthMismatch {
            params: params.len(),
            grads: grads.len(),
            state: state.m.len(),
        });
    }
    state.step += 1;
    let k = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(k);
    let c2 = 1.0 - cfg.beta2.powi(k);
    for (((x, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *x += cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: ModelKind,
    pub params: ParameterSet,
    pub final_objective: f64,
    pub initial_objective: f64,
    pub steps_taken: usize,
    pub converged: bool,
    pub seed: u64,
}

/// Fits `kind` to every response of `ds`.
pub fn fit(
    kind: ModelKind,
    ds: &RatingDataset,
    h: &HyperParams,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<FitResult, InferenceError> {
    fit_observations(kind, &ds.observations(), h, cfg, seed)
}

pub fn fit_observations(
    kind: ModelKind,
    obs: &Observations,
    h: &HyperParams,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<FitResult, InferenceError> {
    cfg.validate()?;
    h.validate()?;
    if obs.is_empty() {
        return Err(InferenceError::EmptyData);
    }
    let mut params = init_parameters(kind, obs, seed);
    let mut grad = params.clone();
    let mut state = AdamState::new(params.len());

    let initial = log_posterior_with_gradient(&params, h, obs, &mut grad)?;
    if !initial.is_finite() {
        return Err(InferenceError::NonFiniteObjective { step: 0, seed });
    }
    // ring buffer of the last WINDOW + 1 objective values
    let mut history = [f64::NAN; CONVERGENCE_WINDOW + 1];
    history[0] = initial;
    let mut objective = initial;
    let mut converged = false;
    let mut steps = 0;

    while steps < cfg.max_steps {
        adam_step(params.as_mut_slice(), grad.as_slice(), &mut state, cfg)?;
        steps += 1;
        objective = log_posterior_with_gradient(&params, h, obs, &mut grad)?;
        if !objective.is_finite() || grad.as_slice().iter().any(|g| !g.is_finite()) {
            return Err(InferenceError::NonFiniteObjective { step: steps, seed });
        }
        let slot = steps % (CONVERGENCE_WINDOW + 1);
        history[slot] = objective;
        if steps >= CONVERGENCE_WINDOW {
            let old = history[(steps - CONVERGENCE_WINDOW) % (CONVERGENCE_WINDOW + 1)];
            if (objective - old).abs() < cfg.convergence_tol {
                converged = true;
                break;
            }
        }
    }

    Ok(FitResult {
        kind,
        params,
        final_objective: objective,
        initial_objective: initial,
        steps_taken: steps,
        converged,
        seed,
    })
}

/// Runs `cfg.restarts` fits with seeds `base_seed, base_seed + 1, ...`.
///
/// Restarts run in parallel; the returned list is in seed order and a
/// failed restart does not stop the others.
pub fn fit_restarts(
    kind: ModelKind,
    ds: &RatingDataset,
    h: &HyperParams,
    cfg: &OptimizerConfig,
    base_seed: u64,
) -> Vec<Result<FitResult, InferenceError>> {
    let obs = ds.observations();
    (0..cfg.restarts as u64)
        .into_par_iter()
        .map(|k| fit_observations(kind, &obs, h, cfg, base_seed.wrapping_add(k)))
        .collect()
}

/// The successful restart with the highest final objective; ties go to the
/// earliest seed.
pub fn best_by_objective(results: &[Result<FitResult, InferenceError>]) -> Option<&FitResult> {
    results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .fold(None, |best: Option<&FitResult>, r| match best {
            Some(b) if b.final_objective >= r.final_objective => Some(b),
            _ => Some(r),
        })
}

/// Recomputes the objective at a fit's parameters.
pub fn objective_at(fit: &FitResult, h: &HyperParams, obs: &Observations) -> Result<f64, InferenceError> {
    Ok(log_posterior(&fit.params, h, obs)?)
}
