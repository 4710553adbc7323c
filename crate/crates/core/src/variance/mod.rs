//! Sandwich covariance of the stacked per-cause coefficients.

use serde::{Deserialize, Serialize};

use crate::data::AnalysisDataset;
use crate::error::{Error, Result};
use crate::estimation::{evaluate, method_weights, CauseWeights, Method, ModelFit, RiskIndex, StratumEvents};
use crate::linalg::{inverse, symmetrize, Matrix, Vector};
use crate::missingness::{CauseModelFit, CompletenessModelFit};

/// Weight on the martingale term of the IPW residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IpwResidualWeight {
    /// `R / pi^2`. Overstates the spread of the IPW estimator in simulation.
    InverseSquare,
    /// `R / pi`.
    #[default]
    Inverse,
}

/// Pieces of the sandwich `Omega = Sigma^-1 Meat Sigma^-1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichParts {
    /// Block-diagonal bread, blocks `-n^-1 dU_j/dbeta_j`.
    pub sigma_hat: Matrix,
    /// `n^-1 sum xi xi'`.
    pub meat: Matrix,
    /// Per-subject residual vectors of length `J p`.
    pub residuals: Vec<Vector>,
    /// `d_matrices[g][j-1]` is the `p x q` completeness correction matrix
    /// of model group `g` and cause `j`; empty when there is no correction.
    pub d_matrices: Vec<Vec<Matrix>>,
    pub omega: Matrix,
}

/// Per-subject pieces of one cause's residual: the own-time centred
/// covariate `z_i - zbar(x_i)` and the compensator
/// `exp(beta'z_i) sum_{t <= x_i} (z_i - zbar(t)) dLambda(t)`.
struct ResidualPieces {
    own: Vec<Vector>,
    comp: Vec<Vector>,
}

fn residual_pieces(ds: &AnalysisDataset, events: &[StratumEvents], beta: &Vector) -> ResidualPieces {
    let p = ds.p();
    // Prefix sums of dLambda and zbar dLambda per stratum.
    let prefix: Vec<(Vec<f64>, Vec<Vector>)> = events
        .iter()
        .map(|se| {
            let mut lam = Vec::with_capacity(se.times.len());
            let mut zl = Vec::with_capacity(se.times.len());
            let mut acc = 0.0;
            let mut accz = Vector::zeros(p);
            for (jump, zb) in se.jumps().into_iter().zip(&se.zbar) {
                acc += jump;
                accz += zb * jump;
                lam.push(acc);
                zl.push(accz.clone());
            }
            (lam, zl)
        })
        .collect();
    let mut own = Vec::with_capacity(ds.n());
    let mut comp = Vec::with_capacity(ds.n());
    for r in ds.records() {
        let k0 = r.stratum - 1;
        let se = &events[k0];
        let z = Vector::from_column_slice(&r.covariates);
        let upto = se.times.partition_point(|&t| t <= r.time);
        let c = if upto == 0 {
            Vector::zeros(p)
        } else {
            let (lam, zl) = &prefix[k0];
            (&z * lam[upto - 1] - &zl[upto - 1]) * beta.dot(&z).exp()
        };
        let o = if upto > 0 && se.times[upto - 1] == r.time {
            &z - &se.zbar[upto - 1]
        } else {
            Vector::zeros(p)
        };
        own.push(o);
        comp.push(c);
    }
    ResidualPieces { own, comp }
}

/// Increments of `M_ij(dt) = N_ij(dt) - Y_i(t) exp(beta'z_i) dLambda_kj(t)`
/// at the event times of the record's stratum, using the fitted baseline.
pub fn martingale_residual_increments(ds: &AnalysisDataset, fit: &ModelFit, i: usize, j: usize) -> Vec<(f64, f64)> {
    let r = &ds.records()[i];
    let base = &fit.baselines[r.stratum - 1][j - 1];
    let risk = fit.beta[j - 1].dot(&Vector::from_column_slice(&r.covariates)).exp();
    let mut out: Vec<(f64, f64)> = base
        .times
        .iter()
        .zip(&base.jumps)
        .take_while(|(&t, _)| t <= r.time)
        .map(|(&t, &d)| (t, -risk * d))
        .collect();
    if r.has_cause(j) {
        match out.last_mut() {
            Some(last) if last.0 == r.time => last.1 += 1.0,
            _ => out.push((r.time, 1.0)),
        }
    }
    out
}

struct CauseTerms {
    events: Vec<StratumEvents>,
    neg_deriv: Matrix,
}

fn cause_terms(ds: &AnalysisDataset, index: &RiskIndex, w: &CauseWeights, j: usize, beta: &Vector) -> Result<CauseTerms> {
    let ev = evaluate(ds, index, w, j, beta, true)?;
    Ok(CauseTerms {
        events: ev.events.expect("events requested"),
        neg_deriv: ev.neg_deriv,
    })
}

fn assemble(
    ds: &AnalysisDataset,
    fit: &ModelFit,
    neg_derivs: &[Matrix],
    residuals: Vec<Vector>,
    d_matrices: Vec<Vec<Matrix>>,
) -> Result<SandwichParts> {
    let p = ds.p();
    let jp = fit.n_causes() * p;
    let n = ds.n() as f64;
    let mut sigma_hat = Matrix::zeros(jp, jp);
    let mut sigma_inv = Matrix::zeros(jp, jp);
    for (j0, nd) in neg_derivs.iter().enumerate() {
        let block = nd / n;
        let inv = inverse(&block).ok_or(Error::Singular {
            cause: j0 + 1,
            stratum: None,
        })?;
        sigma_hat.view_mut((j0 * p, j0 * p), (p, p)).copy_from(&block);
        sigma_inv.view_mut((j0 * p, j0 * p), (p, p)).copy_from(&inv);
    }
    let mut meat = Matrix::zeros(jp, jp);
    for xi in &residuals {
        meat.syger(1.0, xi, xi, 1.0);
    }
    meat /= n;
    symmetrize(&mut meat);
    let mut omega = &sigma_inv * &meat * &sigma_inv;
    symmetrize(&mut omega);
    Ok(SandwichParts {
        sigma_hat,
        meat,
        residuals,
        d_matrices,
        omega,
    })
}

/// Sandwich for an IPW fit, including the correction for estimating the
/// completeness model.
pub fn sandwich_ipw(
    ds: &AnalysisDataset,
    fit: &ModelFit,
    cm: &CompletenessModelFit,
    weight: IpwResidualWeight,
) -> Result<SandwichParts> {
    let weights = method_weights(ds, Method::Ipw, Some(cm), None)?;
    let pi = cm.pi_vector(ds)?;
    let index = RiskIndex::new(ds);
    let p = ds.p();
    let q = cm.design.len();
    let n_causes = fit.n_causes();
    let mut residuals = vec![Vector::zeros(n_causes * p); ds.n()];
    let mut neg_derivs = Vec::with_capacity(n_causes);

    // dw_i/dpsi = -(R_i / pi_i^2) dpi_i/dpsi
    let dw: Vec<Vector> = ds
        .records()
        .iter()
        .zip(&pi)
        .map(|(r, &pi_i)| {
            if r.complete {
                cm.dpi_dpsi(r).map(|d| d * (-1.0 / (pi_i * pi_i)))
            } else {
                Ok(Vector::zeros(q))
            }
        })
        .collect::<Result<_>>()?;
    let info_inv: Vec<Option<Matrix>> = cm
        .groups
        .iter()
        .map(|g| match g.psi {
            None => Ok(None),
            Some(_) => inverse(&g.info)
                .map(Some)
                .ok_or_else(|| Error::Numerical("singular completeness-model information".into())),
        })
        .collect::<Result<_>>()?;
    let mut d_matrices = vec![Vec::with_capacity(n_causes); cm.groups.len()];

    for j in 1..=n_causes {
        let w = &weights[j - 1];
        let terms = cause_terms(ds, &index, w, j, &fit.beta[j - 1])?;
        let pieces = residual_pieces(ds, &terms.events, &fit.beta[j - 1]);
        let m: Vec<Vector> = ds
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let nij = if r.has_cause(j) { 1.0 } else { 0.0 };
                &pieces.own[i] * nij - &pieces.comp[i]
            })
            .collect();
        let mut d = vec![Matrix::zeros(p, q); cm.groups.len()];
        for (i, r) in ds.records().iter().enumerate() {
            let g = cm.group_of_stratum[r.stratum - 1];
            if info_inv[g].is_some() && r.complete && r.event {
                d[g] += &m[i] * dw[i].transpose();
            }
        }
        for (g, dg) in d.iter_mut().enumerate() {
            *dg /= cm.groups[g].n_members as f64;
        }
        let correction: Vec<Option<Matrix>> = d
            .iter()
            .zip(&info_inv)
            .map(|(dg, ii)| ii.as_ref().map(|ii| dg * ii))
            .collect();
        for (i, r) in ds.records().iter().enumerate() {
            let c = if r.complete {
                match weight {
                    IpwResidualWeight::InverseSquare => 1.0 / (pi[i] * pi[i]),
                    IpwResidualWeight::Inverse => 1.0 / pi[i],
                }
            } else {
                0.0
            };
            let mut xi = &m[i] * c;
            if let Some(corr) = &correction[cm.group_of_stratum[r.stratum - 1]] {
                xi += corr * &cm.score_contrib[i];
            }
            residuals[i].rows_mut((j - 1) * p, p).copy_from(&xi);
        }
        for (g, dg) in d.into_iter().enumerate() {
            d_matrices[g].push(dg);
        }
        neg_derivs.push(terms.neg_deriv);
    }
    assemble(ds, fit, &neg_derivs, residuals, d_matrices)
}

/// Generic sandwich with residual `e_i (z_i - zbar(x_i)) - omega_i comp_i`
/// and no nuisance-model correction.
fn sandwich_plain(ds: &AnalysisDataset, fit: &ModelFit, weights: &[CauseWeights]) -> Result<SandwichParts> {
    let index = RiskIndex::new(ds);
    let p = ds.p();
    let n_causes = fit.n_causes();
    let mut residuals = vec![Vector::zeros(n_causes * p); ds.n()];
    let mut neg_derivs = Vec::with_capacity(n_causes);
    for j in 1..=n_causes {
        let w = &weights[j - 1];
        let terms = cause_terms(ds, &index, w, j, &fit.beta[j - 1])?;
        let pieces = residual_pieces(ds, &terms.events, &fit.beta[j - 1]);
        for (i, res) in residuals.iter_mut().enumerate() {
            let xi = &pieces.own[i] * w.event[i] - &pieces.comp[i] * w.omega[i];
            res.rows_mut((j - 1) * p, p).copy_from(&xi);
        }
        neg_derivs.push(terms.neg_deriv);
    }
    assemble(ds, fit, &neg_derivs, residuals, Vec::new())
}

/// Sandwich for an AIPW fit; the compensator uses the AIPW baseline and no
/// correction is made for the estimated nuisance models.
pub fn sandwich_aipw(
    ds: &AnalysisDataset,
    fit: &ModelFit,
    cm: &CompletenessModelFit,
    rm: &CauseModelFit,
) -> Result<SandwichParts> {
    let weights = method_weights(ds, Method::Aipw, Some(cm), Some(rm))?;
    sandwich_plain(ds, fit, &weights)
}

/// Robust sandwich for a complete-case fit.
pub fn sandwich_cc(ds: &AnalysisDataset, fit: &ModelFit) -> Result<SandwichParts> {
    let weights = method_weights(ds, Method::Cc, None, None)?;
    sandwich_plain(ds, fit, &weights)
}

/// Runs the sandwich matching `fit.method` and stores `omega` in the fit.
pub fn attach_variance(
    ds: &AnalysisDataset,
    fit: &mut ModelFit,
    cm: Option<&CompletenessModelFit>,
    rm: Option<&CauseModelFit>,
    weight: IpwResidualWeight,
) -> Result<SandwichParts> {
    let need = |what: &str| Error::Config(format!("{} variance needs a {what} model", fit.method));
    let parts = match fit.method {
        Method::Cc => sandwich_cc(ds, fit)?,
        Method::Ipw => sandwich_ipw(ds, fit, cm.ok_or_else(|| need("completeness"))?, weight)?,
        Method::Aipw => sandwich_aipw(
            ds,
            fit,
            cm.ok_or_else(|| need("completeness"))?,
            rm.ok_or_else(|| need("cause"))?,
        )?,
    };
    fit.omega = Some(parts.omega.clone());
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{neg_score_derivative, score_weighted, solve};
    use crate::linalg::is_positive_definite;
    use crate::missingness::{fit_cause_model, fit_completeness, CauseSpec, CompletenessSpec, FeatureSpec};
    use crate::simulation::test_trial;

    fn complete_copy(ds: &AnalysisDataset) -> AnalysisDataset {
        // Keep only records whose cause is known.
        let recs = ds.records().iter().filter(|r| r.complete).cloned().collect();
        ds.with_records(recs).unwrap()
    }

    #[test]
    fn sandwich_is_symmetric_positive_definite() {
        let ds = test_trial(800, 4);
        let f = FeatureSpec::parse("z1,a");
        let cm = fit_completeness(&ds, &CompletenessSpec::new(f.clone())).unwrap();
        let rm = fit_cause_model(&ds, &CauseSpec::new(f)).unwrap();
        for method in Method::ALL {
            let mut fit = solve(&ds, method, Some(&cm), Some(&rm)).unwrap();
            let parts = attach_variance(&ds, &mut fit, Some(&cm), Some(&rm), IpwResidualWeight::default()).unwrap();
            assert!((&parts.omega - parts.omega.transpose()).amax() < 1e-12);
            assert!(is_positive_definite(&parts.omega), "{method}");
            assert_eq!(parts.residuals.len(), ds.n());
        }
    }

    #[test]
    fn bread_matches_finite_difference() {
        let ds = test_trial(500, 5);
        let fit = solve(&ds, Method::Cc, None, None).unwrap();
        let w = method_weights(&ds, Method::Cc, None, None).unwrap();
        let h = 1e-6;
        for j in 1..=2 {
            let beta = &fit.beta[j - 1];
            let analytic = neg_score_derivative(&ds, j, beta, &w[j - 1]).unwrap();
            for c in 0..beta.len() {
                let mut up = beta.clone();
                up[c] += h;
                let mut down = beta.clone();
                down[c] -= h;
                let fd = (score_weighted(&ds, j, &down, &w[j - 1]).unwrap()
                    - score_weighted(&ds, j, &up, &w[j - 1]).unwrap())
                    / (2.0 * h);
                for r in 0..beta.len() {
                    let rel = (fd[r] - analytic[(r, c)]).abs() / analytic[(r, c)].abs().max(1.0);
                    assert!(rel < 1e-5, "cause {j} ({r},{c}): {} vs {}", fd[r], analytic[(r, c)]);
                }
            }
        }
    }

    #[test]
    fn martingale_residuals_sum_to_zero() {
        let ds = complete_copy(&test_trial(400, 6));
        let fit = solve(&ds, Method::Cc, None, None).unwrap();
        for j in 1..=2 {
            let total: f64 = (0..ds.n())
                .flat_map(|i| martingale_residual_increments(&ds, &fit, i, j))
                .map(|(_, d)| d)
                .sum();
            assert!(total.abs() < 1e-8, "cause {j}: {total}");
        }
    }

    #[test]
    fn complete_data_sandwiches_coincide() {
        let ds = complete_copy(&test_trial(400, 7));
        let f = FeatureSpec::parse("z1,a");
        let cm = fit_completeness(&ds, &CompletenessSpec::new(f.clone())).unwrap();
        let rm = fit_cause_model(&ds, &CauseSpec::new(f)).unwrap();
        let ipw_fit = solve(&ds, Method::Ipw, Some(&cm), None).unwrap();
        let aipw_fit = solve(&ds, Method::Aipw, Some(&cm), Some(&rm)).unwrap();
        let a = sandwich_ipw(&ds, &ipw_fit, &cm, IpwResidualWeight::default()).unwrap();
        let b = sandwich_aipw(&ds, &aipw_fit, &cm, &rm).unwrap();
        let c = sandwich_cc(&ds, &ipw_fit).unwrap();
        assert!((&a.omega - &b.omega).amax() < 1e-10);
        assert!((&a.omega - &c.omega).amax() < 1e-10);
    }
}
