//! Risk-set sums, complete-case / IPW / AIPW estimating equations, Newton
//! solves, and baseline hazard estimation.

mod baseline;
mod risk;
mod score;
mod smoothing;
mod solver;

pub use baseline::StepFunction;
pub use risk::{risk_sums, RiskSums};
pub use score::{
    cause_weights, method_weights, neg_score_derivative, score_aipw, score_cc, score_ipw, score_weighted,
    CauseWeights, Method,
};
pub use smoothing::{default_bandwidth, smooth_hazard, Kernel, SmoothedHazard};
pub use solver::{solve, solve_weighted, CauseDiagnostics, ModelFit, MAX_ITER, SCORE_TOL};

pub(crate) use risk::RiskIndex;
pub(crate) use score::{evaluate, StratumEvents};

use crate::data::AnalysisDataset;
use crate::error::{Error, Result};

/// Cumulative baseline hazard of cause `j` in stratum `k` from a fit.
pub fn breslow_baseline(ds: &AnalysisDataset, fit: &ModelFit, k: usize, j: usize) -> Result<StepFunction> {
    if k == 0 || k > ds.n_strata() || j == 0 || j > fit.n_causes() {
        return Err(Error::Invalid(format!("no baseline for stratum {k}, cause {j}")));
    }
    if !fit.converged() {
        return Err(Error::Invalid("baseline requested from an unconverged fit".into()));
    }
    Ok(fit.baselines[k - 1][j - 1].clone())
}
