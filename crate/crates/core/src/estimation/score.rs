use serde::{Deserialize, Serialize};

use super::risk::RiskIndex;
use crate::data::AnalysisDataset;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::missingness::{CauseModelFit, CompletenessModelFit};

/// Estimating-equation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cc,
    Ipw,
    Aipw,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Cc, Method::Ipw, Method::Aipw];

    pub fn label(self) -> &'static str {
        match self {
            Method::Cc => "CC",
            Method::Ipw => "IPW",
            Method::Aipw => "AIPW",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cc" => Ok(Method::Cc),
            "ipw" => Ok(Method::Ipw),
            "aipw" => Ok(Method::Aipw),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Per-record weights defining one cause's estimating equation:
/// `omega` multiplies the at-risk indicator, `event` the counting-process
/// jump at the record's own time.
#[derive(Debug, Clone, PartialEq)]
pub struct CauseWeights {
    pub omega: Vec<f64>,
    pub event: Vec<f64>,
}

/// Builds the weights of `method` for cause `j` from completeness
/// probabilities `pi` and cause probabilities `rho` (index `j-1`).
pub fn cause_weights(
    ds: &AnalysisDataset,
    method: Method,
    j: usize,
    pi: Option<&[f64]>,
    rho: Option<&[Vec<f64>]>,
) -> CauseWeights {
    let n = ds.n();
    let mut omega = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for (i, r) in ds.records().iter().enumerate() {
        let rr = if r.complete { 1.0 } else { 0.0 };
        let nj = if r.has_cause(j) { 1.0 } else { 0.0 };
        match method {
            Method::Cc => {
                omega.push(rr);
                event.push(rr * nj);
            }
            Method::Ipw => {
                let p = pi.expect("IPW weights need pi")[i];
                omega.push(rr / p);
                event.push(nj / p);
            }
            Method::Aipw => {
                let p = pi.expect("AIPW weights need pi")[i];
                let aug = if r.event {
                    (1.0 - rr / p) * rho.expect("AIPW weights need rho")[i][j - 1]
                } else {
                    0.0
                };
                omega.push(1.0);
                event.push(nj / p + aug);
            }
        }
    }
    CauseWeights { omega, event }
}

/// Weights for every cause, computed from fitted models.
pub fn method_weights(
    ds: &AnalysisDataset,
    method: Method,
    cm: Option<&CompletenessModelFit>,
    rm: Option<&CauseModelFit>,
) -> Result<Vec<CauseWeights>> {
    let pi = match method {
        Method::Cc => None,
        _ => Some(
            cm.ok_or_else(|| Error::Config(format!("{method} needs a completeness model")))?
                .pi_vector(ds)?,
        ),
    };
    let rho = match method {
        Method::Aipw => Some(
            rm.ok_or_else(|| Error::Config("AIPW needs a cause model".into()))?
                .rho_matrix(ds)?,
        ),
        _ => None,
    };
    Ok((1..=ds.n_causes())
        .map(|j| cause_weights(ds, method, j, pi.as_deref(), rho.as_deref()))
        .collect())
}

/// Risk-set quantities at the event times of one stratum, ascending in time.
#[derive(Debug, Clone, Default)]
pub(crate) struct StratumEvents {
    pub times: Vec<f64>,
    /// Unnormalised `sum omega exp(beta'z)` over the risk set.
    pub s0: Vec<f64>,
    pub zbar: Vec<Vector>,
    /// Total event weight at the time.
    pub mass: Vec<f64>,
}

impl StratumEvents {
    /// Baseline hazard increments `mass / S0`.
    pub fn jumps(&self) -> Vec<f64> {
        self.mass.iter().zip(&self.s0).map(|(m, s)| m / s).collect()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub score: Vector,
    /// `sum e_i J(t_i)`, the negative score derivative.
    pub neg_deriv: Matrix,
    /// Same with negative event weights dropped.
    pub neg_deriv_pos: Matrix,
    /// Event mass per stratum.
    pub mass: Vec<f64>,
    pub events: Option<Vec<StratumEvents>>,
}

/// Evaluates one cause's weighted score, its derivative, and optionally
/// the per-time risk-set summaries.
pub(crate) fn evaluate(
    ds: &AnalysisDataset,
    index: &RiskIndex,
    w: &CauseWeights,
    j: usize,
    beta: &Vector,
    keep_events: bool,
) -> Result<Evaluation> {
    let p = ds.p();
    let recs = ds.records();
    let mut score = Vector::zeros(p);
    let mut neg_deriv = Matrix::zeros(p, p);
    let mut neg_deriv_pos = Matrix::zeros(p, p);
    let mut mass_by = vec![0.0; ds.n_strata()];
    let mut events = keep_events.then(|| vec![StratumEvents::default(); ds.n_strata()]);

    let mut s1 = Vector::zeros(p);
    let mut s2 = Matrix::zeros(p, p);
    let mut ez = Vector::zeros(p);
    for (k0, st) in index.strata.iter().enumerate() {
        let mut s0 = 0.0;
        s1.fill(0.0);
        s2.fill(0.0);
        for &(a, b) in &st.ties {
            for &i in &st.order[a..b] {
                let om = w.omega[i];
                if om == 0.0 {
                    continue;
                }
                let z = &recs[i].covariates;
                let wt = om * dot(beta, z).exp();
                s0 += wt;
                for u in 0..p {
                    s1[u] += wt * z[u];
                    for v in 0..=u {
                        s2[(u, v)] += wt * z[u] * z[v];
                    }
                }
            }
            let mut mass = 0.0;
            let mut mass_pos = 0.0;
            ez.fill(0.0);
            let mut any = false;
            for &i in &st.order[a..b] {
                let e = w.event[i];
                if e == 0.0 {
                    continue;
                }
                any = true;
                mass += e;
                mass_pos += e.max(0.0);
                for (u, zu) in recs[i].covariates.iter().enumerate() {
                    ez[u] += e * zu;
                }
            }
            if !any {
                continue;
            }
            let time = recs[st.order[a]].time;
            if s0 <= 0.0 {
                return Err(Error::EmptyRiskSet {
                    time,
                    stratum: k0 + 1,
                    cause: j,
                });
            }
            let zbar = &s1 / s0;
            score += &ez - &zbar * mass;
            for u in 0..p {
                for v in 0..=u {
                    let jm = s2[(u, v)] / s0 - zbar[u] * zbar[v];
                    neg_deriv[(u, v)] += mass * jm;
                    neg_deriv_pos[(u, v)] += mass_pos * jm;
                }
            }
            mass_by[k0] += mass;
            if let Some(ev) = events.as_mut() {
                let se = &mut ev[k0];
                se.times.push(time);
                se.s0.push(s0);
                se.zbar.push(zbar);
                se.mass.push(mass);
            }
        }
    }
    for u in 0..p {
        for v in 0..u {
            neg_deriv[(v, u)] = neg_deriv[(u, v)];
            neg_deriv_pos[(v, u)] = neg_deriv_pos[(u, v)];
        }
    }
    if let Some(ev) = events.as_mut() {
        for se in ev.iter_mut() {
            se.times.reverse();
            se.s0.reverse();
            se.zbar.reverse();
            se.mass.reverse();
        }
    }
    Ok(Evaluation {
        score,
        neg_deriv,
        neg_deriv_pos,
        mass: mass_by,
        events,
    })
}

#[inline]
pub(crate) fn dot(beta: &Vector, z: &[f64]) -> f64 {
    beta.iter().zip(z).map(|(b, x)| b * x).sum()
}

/// Score of an arbitrary weighted equation for cause `j`.
pub fn score_weighted(ds: &AnalysisDataset, j: usize, beta: &Vector, w: &CauseWeights) -> Result<Vector> {
    let index = RiskIndex::new(ds);
    Ok(evaluate(ds, &index, w, j, beta, false)?.score)
}

/// Negative derivative `-dU/dbeta` of a weighted equation for cause `j`.
pub fn neg_score_derivative(
    ds: &AnalysisDataset,
    j: usize,
    beta: &Vector,
    w: &CauseWeights,
) -> Result<Matrix> {
    let index = RiskIndex::new(ds);
    Ok(evaluate(ds, &index, w, j, beta, false)?.neg_deriv)
}

/// Complete-case score for cause `j`; incomplete failures are dropped.
pub fn score_cc(ds: &AnalysisDataset, j: usize, beta: &Vector) -> Result<Vector> {
    score_weighted(ds, j, beta, &cause_weights(ds, Method::Cc, j, None, None))
}

/// Inverse-probability-weighted score for cause `j`.
pub fn score_ipw(ds: &AnalysisDataset, j: usize, beta: &Vector, cm: &CompletenessModelFit) -> Result<Vector> {
    let pi = cm.pi_vector(ds)?;
    score_weighted(ds, j, beta, &cause_weights(ds, Method::Ipw, j, Some(&pi), None))
}

/// Augmented IPW score for cause `j`.
pub fn score_aipw(
    ds: &AnalysisDataset,
    j: usize,
    beta: &Vector,
    cm: &CompletenessModelFit,
    rm: &CauseModelFit,
) -> Result<Vector> {
    let pi = cm.pi_vector(ds)?;
    let rho = rm.rho_matrix(ds)?;
    score_weighted(ds, j, beta, &cause_weights(ds, Method::Aipw, j, Some(&pi), Some(&rho)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::rec;
    use approx::assert_relative_eq;

    fn b(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn no_events_gives_zero_score() {
        let recs = vec![
            rec(1.0, true, true, Some(2), &[0.0], 1),
            rec(2.0, false, true, None, &[1.0], 1),
        ];
        let ds = AnalysisDataset::new(recs, vec!["z".into()], 2, 1, None).unwrap();
        assert_eq!(score_cc(&ds, 1, &b(0.3)).unwrap()[0], 0.0);
    }

    #[test]
    fn identical_covariates_give_zero_score() {
        let recs = vec![
            rec(1.0, true, true, Some(1), &[1.0], 1),
            rec(2.0, false, true, None, &[1.0], 1),
        ];
        let ds = AnalysisDataset::new(recs, vec!["z".into()], 1, 1, None).unwrap();
        assert_relative_eq!(score_cc(&ds, 1, &b(0.7)).unwrap()[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cc_score_hand_sum() {
        // Events at t=1 (z=0) and t=2 (z=1); risk sets {0,1,1,0} and {1,1,0}.
        let recs = vec![
            rec(1.0, true, true, Some(1), &[0.0], 1),
            rec(2.0, true, true, Some(1), &[1.0], 1),
            rec(3.0, false, true, None, &[1.0], 1),
            rec(4.0, false, true, None, &[0.0], 1),
        ];
        let ds = AnalysisDataset::new(recs, vec!["z".into()], 1, 1, None).unwrap();
        let e = 2f64;
        let want = (0.0 - 2.0 * e / (2.0 * e + 2.0)) + (1.0 - 2.0 * e / (2.0 * e + 1.0));
        assert_relative_eq!(score_cc(&ds, 1, &b(e.ln())).unwrap()[0], want, epsilon = 1e-12);
    }

    #[test]
    fn ipw_hand_sum() {
        let recs = vec![
            rec(1.0, true, true, Some(1), &[1.0], 1),
            rec(1.5, true, false, None, &[0.0], 1),
            rec(2.0, true, true, Some(1), &[0.0], 1),
            rec(3.0, false, true, None, &[1.0], 1),
            rec(4.0, false, true, None, &[0.0], 1),
        ];
        let ds = AnalysisDataset::new(recs, vec!["z".into()], 1, 1, None).unwrap();
        let pi = [0.5, 0.5, 1.0, 1.0, 1.0];
        let w = cause_weights(&ds, Method::Ipw, 1, Some(&pi), None);
        // beta = 0. Weighted risk set at t=1: weights (2, 0, 1, 1, 1), z-tilde = 3/5.
        // At t=2: weights (1, 1, 1), z-tilde = 1/3.
        let want = 2.0 * (1.0 - 0.6) + (0.0 - 1.0 / 3.0);
        assert_relative_eq!(score_weighted(&ds, 1, &b(0.0), &w).unwrap()[0], want, epsilon = 1e-12);
    }

    #[test]
    fn aipw_splits_incomplete_failure() {
        let recs = vec![
            rec(1.0, true, false, None, &[1.0], 1),
            rec(2.0, true, true, Some(1), &[0.0], 1),
            rec(3.0, false, true, None, &[0.0], 1),
        ];
        let ds = AnalysisDataset::new(recs, vec!["z".into()], 2, 1, None).unwrap();
        let pi = [0.5, 1.0, 1.0];
        let rho = vec![vec![0.3, 0.7], vec![1.0, 0.0], vec![0.0, 0.0]];
        // beta = 0, unweighted z-bar: 1/3 at t=1, 0 at t=2.
        let w1 = cause_weights(&ds, Method::Aipw, 1, Some(&pi), Some(&rho));
        let w2 = cause_weights(&ds, Method::Aipw, 2, Some(&pi), Some(&rho));
        let s1 = score_weighted(&ds, 1, &b(0.0), &w1).unwrap()[0];
        let s2 = score_weighted(&ds, 2, &b(0.0), &w2).unwrap()[0];
        assert_relative_eq!(s1, 0.3 * (2.0 / 3.0), epsilon = 1e-12);
        assert_relative_eq!(s2, 0.7 * (2.0 / 3.0), epsilon = 1e-12);
    }

    #[test]
    fn weights_reduce_when_all_complete() {
        let recs = vec![
            rec(1.0, true, true, Some(1), &[1.0], 1),
            rec(2.0, true, true, Some(2), &[0.0], 1),
            rec(3.0, false, true, None, &[1.0], 1),
        ];
        let ds = AnalysisDataset::new(recs, vec!["z".into()], 2, 1, None).unwrap();
        let pi = [1.0; 3];
        let rho = vec![vec![0.2, 0.8]; 3];
        for j in 1..=2 {
            let cc = cause_weights(&ds, Method::Cc, j, None, None);
            let ipw = cause_weights(&ds, Method::Ipw, j, Some(&pi), None);
            let aipw = cause_weights(&ds, Method::Aipw, j, Some(&pi), Some(&rho));
            assert_eq!(cc, ipw);
            assert_eq!(cc, aipw);
        }
    }
}
