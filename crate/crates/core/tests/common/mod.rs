//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the crate's own numerics.

#![allow(dead_code)]

use crowdagg::dataset::{Observation, Observations};
use crowdagg::{ModelKind, ParameterSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, StudentsT};

fn naive_softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

/// Log-posterior summed term by term straight from the model definition,
/// with densities from statrs. Default priors only.
pub fn naive_log_posterior(p: &ParameterSet, obs: &Observations) -> f64 {
    let (n_t, n_w, n_c) = (p.n_targets(), p.n_workers(), p.n_criteria());
    let kind = p.kind();
    let v = p.as_slice();
    let normal = |mean: f64, var: f64| statrs::distribution::Normal::new(mean, var.sqrt()).unwrap();
    let gamma = Gamma::new(2.0, 2.0).unwrap();

    let r_of = |i: usize, m: usize| naive_softplus(v[p.r_index(i, m)]);
    let w_of = |j: usize, m: usize| naive_softplus(v[p.w_index(j, m)]);

    let mut total = 0.0;
    for o in &obs.items {
        let (i, j, m) = (o.target, o.worker, o.criterion);
        let base = if kind.has_impression() {
            v[p.mu_index(i, j)]
        } else {
            p.t()[i] + p.b()[j]
        };
        let mean = base + p.q()[i * n_c + m] + p.c()[m];
        total += normal(mean, r_of(i, m) + w_of(j, m)).ln_pdf(o.value);
    }
    for &t in p.t() {
        total += normal(3.0, 1.0).ln_pdf(t);
    }
    for &x in p.q().iter().chain(p.b()).chain(p.c()) {
        total += normal(0.0, 1.0).ln_pdf(x);
    }
    for &raw in p.r_raw().iter().chain(p.w_raw()) {
        let x = naive_softplus(raw);
        // density of softplus(raw) times the Jacobian sigmoid(raw)
        total += gamma.ln_pdf(x) + (1.0 / (1.0 + (-raw).exp())).ln();
    }
    if kind.has_impression() {
        let mut seen = vec![false; n_t * n_w];
        for o in &obs.items {
            seen[o.target * n_w + o.worker] = true;
        }
        for i in 0..n_t {
            for j in 0..n_w {
                if seen[i * n_w + j] {
                    total += normal(p.t()[i] + p.b()[j], 1.0).ln_pdf(v[p.mu_index(i, j)]);
                }
            }
        }
    }
    total
}

/// Random observation set: `n_obs` distinct cells, integer grades 1..=5.
pub fn random_observations(rng: &mut ChaCha8Rng, n_t: usize, n_w: usize, n_c: usize, n_obs: usize) -> Observations {
    let cells = rand::seq::index::sample(rng, n_t * n_w * n_c, n_obs);
    let items = cells
        .into_iter()
        .map(|k| Observation {
            target: k / (n_w * n_c),
            worker: (k / n_c) % n_w,
            criterion: k % n_c,
            value: f64::from(rng.random_range(1..=5u8)),
        })
        .collect();
    Observations::new(n_t, n_w, n_c, items)
}

/// Parameters scattered around the prior: t near 3, offsets and raw
/// variances standard normal, mu near t + b.
pub fn random_parameters(rng: &mut ChaCha8Rng, kind: ModelKind, n_t: usize, n_w: usize, n_c: usize) -> ParameterSet {
    let mut p = ParameterSet::zeros(kind, n_t, n_w, n_c);
    let z = Normal::new(0.0, 1.0).unwrap();
    for x in p.as_mut_slice() {
        *x = z.sample(rng);
    }
    for x in p.t_mut() {
        *x += 3.0;
    }
    let (t, b) = (p.t().to_vec(), p.b().to_vec());
    if let Some(mu) = p.mu_mut() {
        for i in 0..n_t {
            for j in 0..n_w {
                mu[i * n_w + j] += t[i] + b[j];
            }
        }
    }
    p
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Midranks by counting: rank = #smaller + (#equal + 1) / 2.
pub fn brute_midranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let less = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Textbook Pearson on brute-force midranks.
pub fn brute_spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (brute_midranks(a), brute_midranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Brunner–Munzel from placements (statistic, df, two-sided p).
///
/// The placement of a_i is #{b < a_i} + ½#{b = a_i}, and symmetrically
/// for b. With p̂ = mean(placements of b) / n_a, the statistic is
/// (p̂ − ½) / sqrt(σ²_a / n_a + σ²_b / n_b), σ²_a = var(pl_a) / n_b².
pub fn reference_brunner_munzel(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let place = |x: f64, other: &[f64]| {
        other.iter().filter(|&&y| y < x).count() as f64 + 0.5 * other.iter().filter(|&&y| y == x).count() as f64
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pl_a: Vec<f64> = a.iter().map(|&x| place(x, b)).collect();
    let pl_b: Vec<f64> = b.iter().map(|&x| place(x, a)).collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let var = |xs: &[f64]| {
        let m = mean(xs);
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
    };
    let p_hat = mean(&pl_b) / na;
    let sa = var(&pl_a) / (nb * nb) / na;
    let sb = var(&pl_b) / (na * na) / nb;
    let stat = (p_hat - 0.5) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let t = StudentsT::new(0.0, 1.0, df).unwrap();
    let p = 2.0 * t.cdf(-stat.abs());
    (stat, df, p)
}
