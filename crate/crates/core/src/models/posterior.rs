//! Joint log-posterior of a parameter set and its analytic gradient.
//!
//! log p(θ | x) = Σ_obs log N(x; mean, r + w)
//!              + Σ log N(t; t0, σt²) + Σ log N(q, b, c; 0, σ²)
//!              + Σ [log Gamma(softplus(raw); α, β) + log σ(raw)]
//!              + Σ_(i,j) observed log N(mu_ij; t_i + b_j, σμ²)
//!
//! up to the evidence. The `log σ(raw)` terms are the softplus Jacobians.
//! Impressions of (target, worker) pairs without observations take no part.

use std::f64::consts::PI;

use super::{sigmoid, softplus, HyperParams, ModelError, ParameterSet};
use crate::dataset::Observations;
use crate::stats::special::ln_gamma;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn check_shape(p: &ParameterSet, obs: &Observations) -> Result<(), ModelError> {
    if p.n_targets() != obs.n_targets || p.n_workers() != obs.n_workers || p.n_criteria() != obs.n_criteria {
        return Err(ModelError::ShapeMismatch(format!(
            "parameters are {}x{}x{} (targets x workers x criteria), data is {}x{}x{}",
            p.n_targets(),
            p.n_workers(),
            p.n_criteria(),
            obs.n_targets,
            obs.n_workers,
            obs.n_criteria
        )));
    }
    Ok(())
}

#[inline]
fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
}

/// Σ over observations of log N(x; mean, variance).
pub fn log_likelihood(p: &ParameterSet, obs: &Observations) -> Result<f64, ModelError> {
    check_shape(p, obs)?;
    Ok(evaluate(p, &HyperParams::default(), obs, None, Terms::Likelihood))
}

/// Every prior term, including softplus Jacobians and the impression prior
/// of observed (target, worker) pairs.
pub fn log_prior(p: &ParameterSet, h: &HyperParams, obs: &Observations) -> Result<f64, ModelError> {
    check_shape(p, obs)?;
    Ok(evaluate(p, h, obs, None, Terms::Prior))
}

pub fn log_posterior(p: &ParameterSet, h: &HyperParams, obs: &Observations) -> Result<f64, ModelError> {
    check_shape(p, obs)?;
    Ok(evaluate(p, h, obs, None, Terms::All))
}

pub fn log_posterior_gradient(
    p: &ParameterSet,
    h: &HyperParams,
    obs: &Observations,
) -> Result<ParameterSet, ModelError> {
    let mut grad = p.clone();
    log_posterior_with_gradient(p, h, obs, &mut grad)?;
    Ok(grad)
}

/// Evaluates the log-posterior and writes its gradient into `grad`, which
/// must have the same shape as `p`.
pub fn log_posterior_with_gradient(
    p: &ParameterSet,
    h: &HyperParams,
    obs: &Observations,
    grad: &mut ParameterSet,
) -> Result<f64, ModelError> {
    check_shape(p, obs)?;
    if !grad.same_shape(p) {
        return Err(ModelError::ShapeMismatch("gradient buffer has a different shape".into()));
    }
    Ok(evaluate(p, h, obs, Some(grad.as_mut_slice()), Terms::All))
}

#[derive(Clone, Copy, PartialEq)]
enum Terms {
    Likelihood,
    Prior,
    All,
}

fn evaluate(p: &ParameterSet, h: &HyperParams, obs: &Observations, mut grad: Option<&mut [f64]>, terms: Terms) -> f64 {
    let l = p.layout();
    let v = p.as_slice();
    let (n_w, n_c) = (p.n_workers(), p.n_criteria());
    let per_m = p.kind().per_criterion_variance();
    let imp = p.kind().has_impression();

    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }

    // softplus values and derivatives of the variance block [r, w)
    let var_raw = &v[l.r..l.mu];
    let var_eff: Vec<f64> = var_raw.iter().map(|&x| softplus(x)).collect();
    let var_slope: Vec<f64> = var_raw.iter().map(|&x| sigmoid(x)).collect();
    let r_off = 0;
    let w_off = l.w - l.r;

    let mut total = 0.0;

    if terms != Terms::Prior {
        let mut ll = 0.0;
        for o in &obs.items {
            let (i, j, m) = (o.target, o.worker, o.criterion);
            let qi = l.q + i * n_c + m;
            let ci = l.c + m;
            let base = if imp { v[l.mu + i * n_w + j] } else { v[l.t + i] + v[l.b + j] };
            let mean = base + v[qi] + v[ci];
            let (ri, wi) = if per_m {
                (r_off + i * n_c + m, w_off + j * n_c + m)
            } else {
                (r_off + i, w_off + j)
            };
            let s = var_eff[ri] + var_eff[wi];
            let e = o.value - mean;
            ll += -HALF_LN_2PI - 0.5 * s.ln() - e * e / (2.0 * s);

            if let Some(g) = grad.as_deref_mut() {
                let d_mean = e / s;
                let d_var = 0.5 * (e * e / s - 1.0) / s;
                if imp {
                    g[l.mu + i * n_w + j] += d_mean;
                } else {
                    g[l.t + i] += d_mean;
                    g[l.b + j] += d_mean;
                }
                g[qi] += d_mean;
                g[ci] += d_mean;
                g[l.r + ri] += d_var * var_slope[ri];
                g[l.r + wi] += d_var * var_slope[wi];
            }
        }
        total += ll;
    }

    if terms != Terms::Likelihood {
        let mut lp = 0.0;

        for k in l.t..l.q {
            lp += log_normal(v[k], h.t_prior_mean, h.t_prior_var);
        }
        for k in l.q..l.r {
            lp += log_normal(v[k], 0.0, h.offset_prior_var);
        }

        let (alpha, beta) = (h.gamma_shape, h.gamma_rate);
        let gamma_norm = alpha * beta.ln() - ln_gamma(alpha);
        for (&x, &raw) in var_eff.iter().zip(var_raw) {
            // log σ(raw) = -softplus(-raw)
            lp += gamma_norm + (alpha - 1.0) * x.ln() - beta * x - softplus(-raw);
        }

        if imp {
            for i in 0..p.n_targets() {
                for j in 0..n_w {
                    if obs.pair_observed[i * n_w + j] {
                        let mean = v[l.t + i] + v[l.b + j];
                        lp += log_normal(v[l.mu + i * n_w + j], mean, h.mu_var);
                    }
                }
            }
        }

        if let Some(g) = grad.as_deref_mut() {
            for k in l.t..l.q {
                g[k] -= (v[k] - h.t_prior_mean) / h.t_prior_var;
            }
            for k in l.q..l.r {
                g[k] -= v[k] / h.offset_prior_var;
            }
            for (k, (&x, &sig)) in var_eff.iter().zip(&var_slope).enumerate() {
                g[l.r + k] += ((alpha - 1.0) / x - beta) * sig + (1.0 - sig);
            }
            if imp {
                for i in 0..p.n_targets() {
                    for j in 0..n_w {
                        if obs.pair_observed[i * n_w + j] {
                            let mk = l.mu + i * n_w + j;
                            let d = (v[mk] - v[l.t + i] - v[l.b + j]) / h.mu_var;
                            g[mk] -= d;
                            g[l.t + i] += d;
                            g[l.b + j] += d;
                        }
                    }
                }
            }
        }
        total += lp;
    }

    total
}
