use serde::{Deserialize, Serialize};

use super::correlation::midranks;
use super::special::{f_cdf, f_sf, student_t_cdf, student_t_two_sided};
use super::{mean, sample_variance, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    FTwoSided,
    WelchT,
    BrunnerMunzel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Df {
    Single(f64),
    Pair(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub df: Df,
    /// Brunner–Munzel relative effect P(a < b) + ½P(a = b); absent for
    /// the parametric tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<f64>,
    /// Set when the rank variance vanished and the statistic was resolved
    /// without the t approximation.
    #[serde(default)]
    pub degenerate: bool,
}

fn require_size(xs: &[f64], min: usize, name: &str) -> Result<(), StatsError> {
    if xs.len() < min {
        return Err(StatsError::DegenerateSample(format!(
            "sample {name} has {} values, need at least {min}",
            xs.len()
        )));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::DegenerateSample(format!(
            "sample {name} contains non-finite values"
        )));
    }
    Ok(())
}

/// Two-sided variance-ratio F test, statistic `s_a² / s_b²`.
pub fn f_test_two_sided(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    require_size(a, 2, "a")?;
    require_size(b, 2, "b")?;
    let (va, vb) = (sample_variance(a), sample_variance(b));
    if va == 0.0 || vb == 0.0 {
        return Err(StatsError::DegenerateSample("zero sample variance".into()));
    }
    let stat = va / vb;
    let (d1, d2) = ((a.len() - 1) as f64, (b.len() - 1) as f64);
    let p = (2.0 * f_cdf(stat, d1, d2).min(f_sf(stat, d1, d2))).min(1.0);
    Ok(TestResult {
        test: TestKind::FTwoSided,
        statistic: stat,
        p_value: p,
        df: Df::Pair(d1, d2),
        effect: None,
        degenerate: false,
    })
}

/// Two-sided Welch t test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    require_size(a, 2, "a")?;
    require_size(b, 2, "b")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ua, ub) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = ua + ub;
    if se2 == 0.0 {
        return Err(StatsError::DegenerateSample("both samples constant".into()));
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (ua * ua / (na - 1.0) + ub * ub / (nb - 1.0));
    Ok(TestResult {
        test: TestKind::WelchT,
        statistic: t,
        p_value: student_t_two_sided(t, df),
        df: Df::Single(df),
        effect: None,
        degenerate: false,
    })
}

/// Brunner–Munzel test of `P(a < b) + ½P(a = b) = ½`.
///
/// The statistic is positive when `b` tends to be larger. Samples below 10
/// observations are accepted with a warning since the t approximation is
/// poor there.
pub fn brunner_munzel_test(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    require_size(a, 2, "a")?;
    require_size(b, 2, "b")?;
    if a.len() < 10 || b.len() < 10 {
        log::warn!(
            "Brunner-Munzel with small samples ({} and {}); p-value is approximate",
            a.len(),
            b.len()
        );
    }
    let (na, nb) = (a.len(), b.len());
    let (fa, fb) = (na as f64, nb as f64);
    let n = fa + fb;

    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let (rank_a, rank_b) = ranks.split_at(na);
    let within_a = midranks(a);
    let within_b = midranks(b);
    let mean_ra = mean(rank_a);
    let mean_rb = mean(rank_b);

    let var_a = rank_a
        .iter()
        .zip(&within_a)
        .map(|(r, w)| {
            let d = r - w - mean_ra + (fa + 1.0) / 2.0;
            d * d
        })
        .sum::<f64>()
        / (fa - 1.0);
    let var_b = rank_b
        .iter()
        .zip(&within_b)
        .map(|(r, w)| {
            let d = r - w - mean_rb + (fb + 1.0) / 2.0;
            d * d
        })
        .sum::<f64>()
        / (fb - 1.0);

    let effect = (mean_rb - (fb + 1.0) / 2.0) / fa;
    let spread = fa * var_a + fb * var_b;
    let numer = fa * fb * (mean_rb - mean_ra);

    if spread == 0.0 {
        // all values tied (numer = 0) or complete separation
        let (statistic, p_value) = if numer == 0.0 {
            (0.0, 1.0)
        } else {
            (numer.signum() * f64::INFINITY, 0.0)
        };
        return Ok(TestResult {
            test: TestKind::BrunnerMunzel,
            statistic,
            p_value,
            df: Df::Single(f64::NAN),
            effect: Some(effect),
            degenerate: true,
        });
    }

    let w = numer / (n * spread.sqrt());
    let df = spread * spread
        / ((fa * var_a).powi(2) / (fa - 1.0) + (fb * var_b).powi(2) / (fb - 1.0));
    let cdf = student_t_cdf(w, df);
    let p = (2.0 * cdf.min(1.0 - cdf)).clamp(0.0, 1.0);
    Ok(TestResult {
        test: TestKind::BrunnerMunzel,
        statistic: w,
        p_value: p,
        df: Df::Single(df),
        effect: Some(effect),
        degenerate: false,
    })
}
