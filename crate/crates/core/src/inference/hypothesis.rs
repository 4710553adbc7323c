use serde::{Deserialize, Serialize};

use super::mc::{mc_reference, McReference};
use super::multiplicity::step_down_sidak;
use crate::error::{Error, Result};
use crate::estimation::ModelFit;
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Overall,
    PerStrain,
    Sieve,
}

/// Rejection region of a statistic relative to its reference distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub value: f64,
    pub tail: Tail,
    pub critical: f64,
    pub p_value: f64,
    pub p_adjusted: Option<f64>,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: TestKind,
    /// Causes entering the test, in order.
    pub causes: Vec<usize>,
    pub c0: Option<f64>,
    pub level: f64,
    pub draws: usize,
    pub seed: u64,
    pub generator: String,
    pub results: Vec<TestResult>,
}

impl TestReport {
    pub fn get(&self, name: &str) -> Option<&TestResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

/// Monte-Carlo settings shared by the tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub draws: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            draws: 100_000,
            seed: 20240101,
            level: 0.05,
        }
    }
}

/// Treatment coefficients of the selected causes with the covariance of
/// their estimates (`Omega_alpha / n`).
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEstimates {
    pub causes: Vec<usize>,
    pub alpha: Vec<f64>,
    pub cov: Matrix,
}

impl AlphaEstimates {
    pub fn from_fit(fit: &ModelFit, causes: &[usize]) -> Result<Self> {
        if causes.is_empty() {
            return Err(Error::Config("no causes selected for testing".into()));
        }
        if let Some(&bad) = causes.iter().find(|&&j| j == 0 || j > fit.n_causes()) {
            return Err(Error::Config(format!("cause {bad} out of range")));
        }
        let om = fit
            .omega_alpha(causes)
            .ok_or_else(|| Error::Invalid("fit has no covariance estimate".into()))?;
        Ok(Self {
            causes: causes.to_vec(),
            alpha: causes.iter().map(|&j| fit.alpha(j)).collect(),
            cov: om / fit.n as f64,
        })
    }

    fn sigma(&self) -> Result<Vec<f64>> {
        (0..self.alpha.len())
            .map(|j| {
                let v = self.cov[(j, j)];
                if v > 0.0 {
                    Ok(v.sqrt())
                } else {
                    Err(Error::Numerical(format!(
                        "nonpositive variance for cause {}",
                        self.causes[j]
                    )))
                }
            })
            .collect()
    }
}

/// Empirical tail proportion and critical value of `stat` against `reference`.
fn compare(name: String, value: f64, reference: &mut [f64], tail: Tail, level: f64) -> TestResult {
    let b = reference.len();
    reference.sort_by(f64::total_cmp);
    let m = ((level * b as f64).ceil() as usize).clamp(1, b);
    let (critical, count, reject) = match tail {
        Tail::Lower => {
            let c = reference[m - 1];
            let count = reference.partition_point(|&x| x <= value);
            (c, count, value < c)
        }
        Tail::Upper => {
            let c = reference[b - m];
            let count = b - reference.partition_point(|&x| x < value);
            (c, count, value > c)
        }
    };
    TestResult {
        name,
        value,
        tail,
        critical,
        p_value: count as f64 / b as f64,
        p_adjusted: None,
        reject,
    }
}

fn draws_for(est: &AlphaEstimates, mc: &McSettings) -> Result<McReference> {
    mc_reference(&est.cov, mc.draws, mc.seed)
}

fn report(kind: TestKind, est: &AlphaEstimates, c0: Option<f64>, mc: &McSettings, r: &McReference, results: Vec<TestResult>) -> TestReport {
    TestReport {
        kind,
        causes: est.causes.clone(),
        c0,
        level: mc.level,
        draws: r.len(),
        seed: mc.seed,
        generator: r.generator.clone(),
        results,
    }
}

/// `U1 = min_j (alpha_j - c0) / sigma_j` (lower tail) and
/// `U2 = sum_j ((alpha_j - c0) / sigma_j)^2` (upper tail).
pub fn overall_test(est: &AlphaEstimates, c0: f64, mc: &McSettings) -> Result<TestReport> {
    let sigma = est.sigma()?;
    let r = draws_for(est, mc)?;
    let t: Vec<f64> = est.alpha.iter().zip(&sigma).map(|(a, s)| (a - c0) / s).collect();
    let u1 = t.iter().copied().fold(f64::INFINITY, f64::min);
    let u2 = t.iter().map(|x| x * x).sum::<f64>();
    let mut ref1 = Vec::with_capacity(r.len());
    let mut ref2 = Vec::with_capacity(r.len());
    for c in r.draws.column_iter() {
        let mut mn = f64::INFINITY;
        let mut ss = 0.0;
        for (z, s) in c.iter().zip(&sigma) {
            let x = z / s;
            mn = mn.min(x);
            ss += x * x;
        }
        ref1.push(mn);
        ref2.push(ss);
    }
    let results = vec![
        compare("U1".into(), u1, &mut ref1, Tail::Lower, mc.level),
        compare("U2".into(), u2, &mut ref2, Tail::Upper, mc.level),
    ];
    Ok(report(TestKind::Overall, est, Some(c0), mc, &r, results))
}

/// Per-cause `U1j` (lower tail) and `U2j` (upper tail), each against its own
/// coordinate of the reference, with step-down Sidak adjustment within
/// each family. Decisions use the adjusted p-values.
pub fn per_strain_test(est: &AlphaEstimates, c0: f64, mc: &McSettings) -> Result<TestReport> {
    let sigma = est.sigma()?;
    let r = draws_for(est, mc)?;
    let mut u1 = Vec::new();
    let mut u2 = Vec::new();
    for (j, (&a, &s)) in est.alpha.iter().zip(&sigma).enumerate() {
        let t = (a - c0) / s;
        let mut ref1: Vec<f64> = r.draws.row(j).iter().map(|z| z / s).collect();
        let mut ref2: Vec<f64> = ref1.iter().map(|x| x * x).collect();
        let cause = est.causes[j];
        u1.push(compare(format!("U1[{cause}]"), t, &mut ref1, Tail::Lower, mc.level));
        u2.push(compare(format!("U2[{cause}]"), t * t, &mut ref2, Tail::Upper, mc.level));
    }
    for fam in [&mut u1, &mut u2] {
        let raw: Vec<f64> = fam.iter().map(|t| t.p_value).collect();
        for (t, adj) in fam.iter_mut().zip(step_down_sidak(&raw)) {
            t.p_adjusted = Some(adj);
            t.reject = adj <= mc.level;
        }
    }
    u1.extend(u2);
    Ok(report(TestKind::PerStrain, est, Some(c0), mc, &r, u1))
}

/// Ordered-alternative tests on successive differences
/// `d_j = alpha_j - alpha_{j-1}`: `T1 = min_j d_j / sd(d_j)` and
/// `T2 = sum_j d_j^2 / var(d_j)`, both rejecting for large values.
pub fn sieve_test(est: &AlphaEstimates, mc: &McSettings) -> Result<TestReport> {
    let m = est.alpha.len();
    if m < 2 {
        return Err(Error::Config("sieve tests need at least two causes".into()));
    }
    let sd: Vec<f64> = (1..m)
        .map(|j| {
            let v = est.cov[(j, j)] + est.cov[(j - 1, j - 1)] - 2.0 * est.cov[(j, j - 1)];
            if v > 0.0 {
                Ok(v.sqrt())
            } else {
                Err(Error::Numerical(format!(
                    "nonpositive variance for the difference of causes {} and {}",
                    est.causes[j],
                    est.causes[j - 1]
                )))
            }
        })
        .collect::<Result<_>>()?;
    let r = draws_for(est, mc)?;
    let d: Vec<f64> = (1..m).map(|j| (est.alpha[j] - est.alpha[j - 1]) / sd[j - 1]).collect();
    let t1 = d.iter().copied().fold(f64::INFINITY, f64::min);
    let t2 = d.iter().map(|x| x * x).sum::<f64>();
    let mut ref1 = Vec::with_capacity(r.len());
    let mut ref2 = Vec::with_capacity(r.len());
    for c in r.draws.column_iter() {
        let mut mn = f64::INFINITY;
        let mut ss = 0.0;
        for j in 1..m {
            let x = (c[j] - c[j - 1]) / sd[j - 1];
            mn = mn.min(x);
            ss += x * x;
        }
        ref1.push(mn);
        ref2.push(ss);
    }
    let results = vec![
        compare("T1".into(), t1, &mut ref1, Tail::Upper, mc.level),
        compare("T2".into(), t2, &mut ref2, Tail::Upper, mc.level),
    ];
    Ok(report(TestKind::Sieve, est, None, mc, &r, results))
}

/// [`overall_test`] on the treatment effects of `causes` in a fit.
/// `ve0` is the null efficacy, `c0 = log(1 - ve0)`.
pub fn test_overall(fit: &ModelFit, causes: &[usize], ve0: f64, mc: &McSettings) -> Result<TestReport> {
    overall_test(&AlphaEstimates::from_fit(fit, causes)?, c0_of(ve0)?, mc)
}

pub fn test_per_strain(fit: &ModelFit, causes: &[usize], ve0: f64, mc: &McSettings) -> Result<TestReport> {
    per_strain_test(&AlphaEstimates::from_fit(fit, causes)?, c0_of(ve0)?, mc)
}

pub fn test_sieve(fit: &ModelFit, causes: &[usize], mc: &McSettings) -> Result<TestReport> {
    sieve_test(&AlphaEstimates::from_fit(fit, causes)?, mc)
}

pub fn c0_of(ve0: f64) -> Result<f64> {
    if ve0 < 1.0 {
        Ok((1.0 - ve0).ln())
    } else {
        Err(Error::Config(format!("null efficacy {ve0} must be below 1")))
    }
}
