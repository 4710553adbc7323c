use serde::{Deserialize, Serialize};

use super::baseline::{from_events, StepFunction};
use super::risk::RiskIndex;
use super::score::{evaluate, method_weights, CauseWeights, Method};
use crate::data::AnalysisDataset;
use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, solve as lin_solve, Matrix, Vector};
use crate::missingness::{CauseModelFit, CompletenessModelFit};

pub const MAX_ITER: usize = 100;
/// Convergence threshold on `max |U| / n`.
pub const SCORE_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseDiagnostics {
    pub cause: usize,
    pub iterations: usize,
    /// `max |U(beta-hat)| / n`.
    pub score_norm: f64,
    pub converged: bool,
    /// Newton steps that used the positive-part curvature because the
    /// observed derivative was indefinite.
    pub fallback_steps: usize,
}

/// Fitted stratified cause-specific proportional hazards model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFit {
    pub method: Method,
    /// `beta[j-1]` is the coefficient vector of cause `j`.
    pub beta: Vec<Vector>,
    /// Covariance of `sqrt(n)(beta-hat - beta)` over the stacked
    /// coefficients, filled by the variance routines.
    pub omega: Option<Matrix>,
    /// `baselines[k-1][j-1]` is the cumulative baseline hazard of cause `j`
    /// in stratum `k`.
    pub baselines: Vec<Vec<StepFunction>>,
    pub diagnostics: Vec<CauseDiagnostics>,
    pub n: usize,
    pub covariate_names: Vec<String>,
    pub cause_labels: Vec<String>,
    pub warnings: Vec<String>,
}

impl ModelFit {
    pub fn n_causes(&self) -> usize {
        self.beta.len()
    }

    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.iter().all(|d| d.converged)
    }

    /// Treatment coefficient (first covariate) of cause `j`.
    pub fn alpha(&self, j: usize) -> f64 {
        self.beta[j - 1][0]
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.beta.iter().map(|b| b[0]).collect()
    }

    /// Coefficients stacked cause by cause.
    pub fn stacked(&self) -> Vector {
        let p = self.p();
        Vector::from_fn(self.n_causes() * p, |r, _| self.beta[r / p][r % p])
    }

    /// Index of cause `j`'s treatment coefficient in the stacked vector.
    pub fn alpha_index(&self, j: usize) -> usize {
        (j - 1) * self.p()
    }

    /// `Omega_alpha`, the rows and columns of `omega` for the treatment
    /// coefficients of `causes`.
    pub fn omega_alpha(&self, causes: &[usize]) -> Option<Matrix> {
        let om = self.omega.as_ref()?;
        let idx: Vec<usize> = causes.iter().map(|&j| self.alpha_index(j)).collect();
        Some(Matrix::from_fn(idx.len(), idx.len(), |a, b| om[(idx[a], idx[b])]))
    }

    /// Standard errors `sqrt(Omega_jj / n)` of the stacked coefficients.
    pub fn standard_errors(&self) -> Option<Vector> {
        let om = self.omega.as_ref()?;
        let n = self.n as f64;
        Some(Vector::from_fn(om.nrows(), |r, _| (om[(r, r)].max(0.0) / n).sqrt()))
    }
}

/// Fits every cause with `method`, using `cm` and `rm` where the method
/// needs them.
pub fn solve(
    ds: &AnalysisDataset,
    method: Method,
    cm: Option<&CompletenessModelFit>,
    rm: Option<&CauseModelFit>,
) -> Result<ModelFit> {
    let weights = method_weights(ds, method, cm, rm)?;
    solve_weighted(ds, method, &weights)
}

/// Fits every cause from precomputed weights (`weights[j-1]` for cause `j`).
pub fn solve_weighted(ds: &AnalysisDataset, method: Method, weights: &[CauseWeights]) -> Result<ModelFit> {
    if ds.p() == 0 {
        return Err(Error::Invalid("at least one covariate is required".into()));
    }
    let index = RiskIndex::new(ds);
    let mut beta = Vec::with_capacity(ds.n_causes());
    let mut diagnostics = Vec::with_capacity(ds.n_causes());
    let mut baselines = vec![Vec::with_capacity(ds.n_causes()); ds.n_strata()];
    let mut warnings = Vec::new();
    for (j0, w) in weights.iter().enumerate() {
        let j = j0 + 1;
        let (b, diag) = newton(ds, &index, w, j, method == Method::Aipw)?;
        if diag.fallback_steps > 0 {
            warnings.push(format!(
                "cause {j}: {} Newton steps used positive-part curvature",
                diag.fallback_steps
            ));
        }
        let ev = evaluate(ds, &index, w, j, &b, true)?
            .events
            .expect("events requested");
        for (k0, se) in ev.iter().enumerate() {
            let step = from_events(se);
            if !step.is_nondecreasing() {
                warnings.push(format!(
                    "baseline hazard of cause {j} in stratum {} has negative increments",
                    k0 + 1
                ));
            }
            baselines[k0].push(step);
        }
        beta.push(b);
        diagnostics.push(diag);
    }
    Ok(ModelFit {
        method,
        beta,
        omega: None,
        baselines,
        diagnostics,
        n: ds.n(),
        covariate_names: ds.covariate_names().to_vec(),
        cause_labels: ds.cause_labels().to_vec(),
        warnings,
    })
}

fn newton(
    ds: &AnalysisDataset,
    index: &RiskIndex,
    w: &CauseWeights,
    j: usize,
    allow_fallback: bool,
) -> Result<(Vector, CauseDiagnostics)> {
    let n = ds.n() as f64;
    let mut beta = Vector::zeros(ds.p());
    let mut ev = evaluate(ds, index, w, j, &beta, false)?;
    let mut trace = Vec::new();
    let mut fallback_steps = 0;
    for it in 0..=MAX_ITER {
        let norm = ev.score.amax() / n;
        trace.push(format!("{norm:.3e}"));
        if norm <= SCORE_TOL {
            // A zero score with flat curvature does not identify beta.
            let identified = is_positive_definite(&ev.neg_deriv)
                || (allow_fallback && is_positive_definite(&ev.neg_deriv_pos));
            if !identified {
                return Err(singular(j, &ev.mass));
            }
            return Ok((
                beta,
                CauseDiagnostics {
                    cause: j,
                    iterations: it,
                    score_norm: norm,
                    converged: true,
                    fallback_steps,
                },
            ));
        }
        if it == MAX_ITER {
            break;
        }
        let curvature = if is_positive_definite(&ev.neg_deriv) {
            &ev.neg_deriv
        } else if allow_fallback && is_positive_definite(&ev.neg_deriv_pos) {
            fallback_steps += 1;
            &ev.neg_deriv_pos
        } else {
            return Err(singular(j, &ev.mass));
        };
        let step = lin_solve(curvature, &ev.score).ok_or_else(|| singular(j, &ev.mass))?;
        let current = ev.score.norm();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = &beta + &step * t;
            let cev = evaluate(ds, index, w, j, &cand, false)?;
            if cev.score.norm() < current && cev.score.iter().all(|x| x.is_finite()) {
                accepted = Some((cand, cev));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((b, e)) => {
                beta = b;
                ev = e;
            }
            None => break,
        }
    }
    Err(Error::NoConvergence {
        what: format!("estimating equation for cause {j}"),
        iterations: trace.len() - 1,
        trace: trace.join(", "),
    })
}

fn singular(j: usize, mass: &[f64]) -> Error {
    Error::Singular {
        cause: j,
        stratum: mass.iter().position(|&m| m == 0.0).map(|k| k + 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::rec;
    use crate::estimation::{score_aipw, score_ipw};
    use crate::missingness::{fit_cause_model, fit_completeness, CauseSpec, CompletenessSpec, FeatureSpec};
    use crate::simulation::test_trial;

    fn nuisance(ds: &AnalysisDataset) -> (CompletenessModelFit, CauseModelFit) {
        let f = FeatureSpec::parse("z1,a");
        (
            fit_completeness(ds, &CompletenessSpec::new(f.clone())).unwrap(),
            fit_cause_model(ds, &CauseSpec::new(f)).unwrap(),
        )
    }

    #[test]
    fn scores_vanish_at_the_solution() {
        let ds = test_trial(600, 1);
        let (cm, rm) = nuisance(&ds);
        let ipw = solve(&ds, Method::Ipw, Some(&cm), None).unwrap();
        let aipw = solve(&ds, Method::Aipw, Some(&cm), Some(&rm)).unwrap();
        assert!(ipw.converged() && aipw.converged());
        let tol = SCORE_TOL * ds.n() as f64;
        for j in 1..=2 {
            assert!(score_ipw(&ds, j, &ipw.beta[j - 1], &cm).unwrap().amax() <= tol);
            assert!(score_aipw(&ds, j, &aipw.beta[j - 1], &cm, &rm).unwrap().amax() <= tol);
        }
    }

    #[test]
    fn baselines_are_nondecreasing_and_cover_the_strata() {
        let ds = test_trial(600, 2);
        let (cm, _) = nuisance(&ds);
        let fit = solve(&ds, Method::Ipw, Some(&cm), None).unwrap();
        assert_eq!(fit.baselines.len(), ds.n_strata());
        for per_cause in &fit.baselines {
            assert_eq!(per_cause.len(), 2);
            assert!(per_cause.iter().all(|b| b.is_nondecreasing() && b.total() > 0.0));
        }
    }

    #[test]
    fn constant_covariate_is_singular() {
        let v = (0..8)
            .map(|i| rec(1.0 + i as f64, i % 2 == 0, true, (i % 2 == 0).then_some(1), &[1.0], 1))
            .collect();
        let ds = AnalysisDataset::new(v, vec!["z".into()], 1, 1, None).unwrap();
        let err = solve(&ds, Method::Cc, None, None).unwrap_err();
        assert!(matches!(err, Error::Singular { cause: 1, .. }), "{err}");
    }

    #[test]
    fn accessors_index_the_stacked_vector() {
        let ds = test_trial(400, 3);
        let fit = solve(&ds, Method::Cc, None, None).unwrap();
        let s = fit.stacked();
        assert_eq!(s.len(), 4);
        assert_eq!(s[fit.alpha_index(2)], fit.alpha(2));
        assert_eq!(fit.alphas(), vec![fit.alpha(1), fit.alpha(2)]);
    }
}
