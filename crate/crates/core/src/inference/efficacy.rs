use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimation::{Method, ModelFit};

/// Which vaccine-efficacy interval is reported as the primary one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiForm {
    /// `1 - exp(alpha +/- z sigma)`, always below 1.
    #[default]
    Log,
    /// `VE +/- z sigma exp(alpha)`.
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VeEstimate {
    pub cause: usize,
    pub label: String,
    pub alpha: f64,
    pub se_alpha: f64,
    pub ve: f64,
    /// Delta-method standard error of `VE`.
    pub se_ve: f64,
    pub ci_delta: (f64, f64),
    pub ci_log: (f64, f64),
}

impl VeEstimate {
    pub fn ci(&self, form: CiForm) -> (f64, f64) {
        match form {
            CiForm::Log => self.ci_log,
            CiForm::Delta => self.ci_delta,
        }
    }
}

/// `VD(i, j) = exp(alpha_i - alpha_j)` with a log-scale interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VdEstimate {
    pub i: usize,
    pub j: usize,
    pub vd: f64,
    /// Delta-method standard error `VD * sd(alpha_i - alpha_j)`.
    pub se: f64,
    pub se_log: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyReport {
    pub method: Method,
    pub level: f64,
    pub form: CiForm,
    pub ve: Vec<VeEstimate>,
    pub vd: Vec<VdEstimate>,
}

pub(crate) fn z_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0)
}

/// VE for one cause from `alpha` and its standard error.
pub fn ve_estimate(cause: usize, label: &str, alpha: f64, se_alpha: f64, level: f64) -> VeEstimate {
    let z = z_quantile(level);
    let ve = 1.0 - alpha.exp();
    let se_ve = se_alpha * alpha.exp();
    VeEstimate {
        cause,
        label: label.to_string(),
        alpha,
        se_alpha,
        ve,
        se_ve,
        ci_delta: (ve - z * se_ve, ve + z * se_ve),
        ci_log: (1.0 - (alpha + z * se_alpha).exp(), 1.0 - (alpha - z * se_alpha).exp()),
    }
}

/// VD from the two treatment coefficients and `Var(alpha_i - alpha_j)`.
pub fn vd_estimate(i: usize, j: usize, alpha_i: f64, alpha_j: f64, var_diff: f64, level: f64) -> VdEstimate {
    let z = z_quantile(level);
    let d = alpha_i - alpha_j;
    let vd = d.exp();
    let se_log = var_diff.max(0.0).sqrt();
    VdEstimate {
        i,
        j,
        vd,
        se: vd * se_log,
        se_log,
        ci: ((d - z * se_log).exp(), (d + z * se_log).exp()),
    }
}

/// VE for every cause and VD for each requested `(i, j)` pair, from a fit
/// carrying `omega`.
pub fn efficacy_report(fit: &ModelFit, pairs: &[(usize, usize)], level: f64) -> Result<EfficacyReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} outside (0, 1)")));
    }
    let omega = fit
        .omega
        .as_ref()
        .ok_or_else(|| Error::Invalid("fit has no covariance estimate".into()))?;
    let n = fit.n as f64;
    let mut ve = Vec::with_capacity(fit.n_causes());
    for j in 1..=fit.n_causes() {
        let a = fit.alpha_index(j);
        let var = omega[(a, a)];
        if !(var > 0.0) {
            return Err(Error::Numerical(format!("nonpositive variance for the treatment effect of cause {j}")));
        }
        ve.push(ve_estimate(j, &fit.cause_labels[j - 1], fit.alpha(j), (var / n).sqrt(), level));
    }
    let mut vd = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        if i == 0 || j == 0 || i > fit.n_causes() || j > fit.n_causes() {
            return Err(Error::Config(format!("VD pair ({i}, {j}) out of range")));
        }
        let (ai, aj) = (fit.alpha_index(i), fit.alpha_index(j));
        let var = (omega[(ai, ai)] + omega[(aj, aj)] - 2.0 * omega[(ai, aj)]) / n;
        if i != j && !(var > 0.0) {
            return Err(Error::Numerical(format!("nonpositive variance for VD({i}, {j})")));
        }
        vd.push(vd_estimate(i, j, fit.alpha(i), fit.alpha(j), var, level));
    }
    Ok(EfficacyReport {
        method: fit.method,
        level,
        form: CiForm::Log,
        ve,
        vd,
    })
}

/// All ordered pairs `(i, j)` with `i != j`.
pub fn all_pairs(n_causes: usize) -> Vec<(usize, usize)> {
    (1..=n_causes)
        .flat_map(|i| (1..=n_causes).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ve_points() {
        assert_eq!(ve_estimate(1, "1", 0.0, 0.1, 0.95).ve, 0.0);
        assert_relative_eq!(ve_estimate(1, "1", 0.7f64.ln(), 0.1, 0.95).ve, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn log_interval_below_one() {
        for a in [-5.0, -1.0, 0.0, 2.0] {
            let v = ve_estimate(1, "1", a, 3.0, 0.95);
            assert!(v.ci_log.1 < 1.0 && v.ci_log.0 < v.ci_log.1);
        }
    }

    #[test]
    fn vd_reciprocal_and_identity() {
        let a = vd_estimate(1, 2, -0.3, 0.4, 0.05, 0.95);
        let b = vd_estimate(2, 1, 0.4, -0.3, 0.05, 0.95);
        assert!((a.vd * b.vd - 1.0).abs() <= 1e-12);
        assert_eq!(vd_estimate(1, 1, 0.2, 0.2, 0.0, 0.95).vd, 1.0);
    }
}
