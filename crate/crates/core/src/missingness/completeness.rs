use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::design::{Design, FeatureSpec};
use super::glm::{expit, fit_logistic, GlmFailure};
use super::{group_label, groups_for, ModelScope};
use crate::data::{AnalysisDataset, StructuralCause, SubjectRecord};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Lower bound applied to fitted completeness probabilities before they are
/// used as inverse weights.
pub const POSITIVITY_FLOOR: f64 = 1e-6;

/// Configuration of the completeness model `logit r_k(W) = psi_k' x(W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessSpec {
    pub features: FeatureSpec,
    pub scope: ModelScope,
    pub structural: Option<StructuralCause>,
}

impl CompletenessSpec {
    pub fn new(features: FeatureSpec) -> Self {
        Self {
            features,
            scope: ModelScope::PerStratum,
            structural: None,
        }
    }
}

/// Fit of one completeness-model group (a stratum, or all strata when
/// pooled).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletenessGroup {
    pub strata: Vec<usize>,
    /// `None` when every failure in the group is complete; `r` is then 1.
    pub psi: Option<Vector>,
    /// Information matrix averaged over all `n_g` group members.
    pub info: Matrix,
    pub n_members: usize,
    pub iterations: usize,
}

impl CompletenessGroup {
    pub fn is_degenerate(&self) -> bool {
        self.psi.is_none()
    }
}

/// Fitted completeness model with the score and information pieces used by
/// the IPW sandwich variance.
#[derive(Debug, Serialize, Deserialize)]
pub struct CompletenessModelFit {
    pub design: Design,
    pub scope: ModelScope,
    pub structural: Option<StructuralCause>,
    pub groups: Vec<CompletenessGroup>,
    /// Group index of stratum `k` at position `k-1`.
    pub group_of_stratum: Vec<usize>,
    /// Per-record score vectors `delta (R - r) x(W)`; zero for records that
    /// do not enter the likelihood.
    pub score_contrib: Vec<Vector>,
    /// Smallest fitted `r` over failures.
    pub min_fitted_prob: f64,
    #[serde(skip)]
    floor_hits: AtomicUsize,
}

impl Clone for CompletenessModelFit {
    fn clone(&self) -> Self {
        Self {
            design: self.design.clone(),
            scope: self.scope,
            structural: self.structural,
            groups: self.groups.clone(),
            group_of_stratum: self.group_of_stratum.clone(),
            score_contrib: self.score_contrib.clone(),
            min_fitted_prob: self.min_fitted_prob,
            floor_hits: AtomicUsize::new(self.floor_hits()),
        }
    }
}

fn enters_likelihood(rec: &SubjectRecord, structural: Option<&StructuralCause>) -> bool {
    rec.event && !structural.is_some_and(|s| s.applies(rec))
}

/// Fits the completeness model by maximum likelihood over failures.
pub fn fit_completeness(ds: &AnalysisDataset, spec: &CompletenessSpec) -> Result<CompletenessModelFit> {
    let design = spec.features.resolve(ds)?;
    let q = design.len();
    let structural = spec.structural.as_ref();
    let (groups_strata, group_of_stratum) = groups_for(ds, spec.scope);
    let mut groups = Vec::with_capacity(groups_strata.len());
    let mut score_contrib = vec![Vector::zeros(q); ds.n()];

    for strata in groups_strata {
        let members: Vec<usize> = ds
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| strata.contains(&r.stratum))
            .map(|(i, _)| i)
            .collect();
        let used: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&i| enters_likelihood(&ds.records()[i], structural))
            .collect();
        let label = group_label(&strata);
        let rows = used
            .iter()
            .map(|&i| design.row(&ds.records()[i]))
            .collect::<Result<Vec<_>>>()?;
        let y: Vec<bool> = used.iter().map(|&i| ds.records()[i].complete).collect();
        let n_complete = y.iter().filter(|&&b| b).count();

        if n_complete == used.len() {
            groups.push(CompletenessGroup {
                strata,
                psi: None,
                info: Matrix::zeros(q, q),
                n_members: members.len(),
                iterations: 0,
            });
            continue;
        }
        if n_complete == 0 {
            return Err(Error::Invalid(format!(
                "no complete failures in stratum {label}; completeness model unidentified"
            )));
        }
        let fit = fit_logistic(&rows, &y).map_err(|f| match f {
            GlmFailure::Separation(idx) => Error::Separation {
                stratum: label.clone(),
                feature: design.labels[idx].clone(),
            },
            GlmFailure::NoConvergence { iterations, trace } => Error::NoConvergence {
                what: format!("completeness model for stratum {label}"),
                iterations,
                trace,
            },
        })?;
        let psi = fit.coef;
        let mut info = Matrix::zeros(q, q);
        for (&i, x) in used.iter().zip(&rows) {
            let xv = Vector::from_column_slice(x);
            let r = expit(psi.dot(&xv));
            info += (&xv * xv.transpose()) * (r * (1.0 - r));
            let resid = if ds.records()[i].complete { 1.0 - r } else { -r };
            score_contrib[i] = xv * resid;
        }
        info /= members.len() as f64;
        groups.push(CompletenessGroup {
            strata,
            psi: Some(psi),
            info,
            n_members: members.len(),
            iterations: fit.iterations,
        });
    }

    let mut out = CompletenessModelFit {
        design,
        scope: spec.scope,
        structural: spec.structural,
        groups,
        group_of_stratum,
        score_contrib,
        min_fitted_prob: 1.0,
        floor_hits: AtomicUsize::new(0),
    };
    out.min_fitted_prob = ds
        .records()
        .iter()
        .filter(|r| r.event)
        .map(|r| out.r_hat(r))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(1.0, f64::min);
    Ok(out)
}

impl CompletenessModelFit {
    pub fn group(&self, stratum: usize) -> &CompletenessGroup {
        &self.groups[self.group_of_stratum[stratum - 1]]
    }

    pub fn is_structural(&self, rec: &SubjectRecord) -> bool {
        self.structural.is_some_and(|s| s.applies(rec))
    }

    /// Unfloored fitted `r_k(W)` for a failure.
    pub fn r_hat(&self, rec: &SubjectRecord) -> Result<f64> {
        if self.is_structural(rec) {
            return Ok(1.0);
        }
        match &self.group(rec.stratum).psi {
            None => Ok(1.0),
            Some(psi) => {
                let x = Vector::from_vec(self.design.row(rec)?);
                Ok(expit(psi.dot(&x)))
            }
        }
    }

    /// `pi = delta r(W) + (1 - delta)`, floored at [`POSITIVITY_FLOOR`].
    /// Each flooring increments [`Self::floor_hits`].
    pub fn pi(&self, rec: &SubjectRecord) -> Result<f64> {
        if !rec.event {
            return Ok(1.0);
        }
        let r = self.r_hat(rec)?;
        if r < POSITIVITY_FLOOR {
            self.floor_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(POSITIVITY_FLOOR);
        }
        Ok(r)
    }

    /// `pi` for every record of the dataset.
    pub fn pi_vector(&self, ds: &AnalysisDataset) -> Result<Vec<f64>> {
        ds.records().iter().map(|r| self.pi(r)).collect()
    }

    /// `d pi / d psi = delta r (1 - r) x(W)` for the logistic link; zero for
    /// censored, structural, or degenerate-group records.
    pub fn dpi_dpsi(&self, rec: &SubjectRecord) -> Result<Vector> {
        let q = self.design.len();
        if !rec.event || self.is_structural(rec) {
            return Ok(Vector::zeros(q));
        }
        match &self.group(rec.stratum).psi {
            None => Ok(Vector::zeros(q)),
            Some(psi) => {
                let x = Vector::from_vec(self.design.row(rec)?);
                let r = expit(psi.dot(&x));
                Ok(x * (r * (1.0 - r)))
            }
        }
    }

    /// Number of times [`Self::pi`] hit the positivity floor.
    pub fn floor_hits(&self) -> usize {
        self.floor_hits.load(Ordering::Relaxed)
    }

    /// Completeness fit that treats every record as fully observed (`pi = 1`).
    pub fn all_complete(ds: &AnalysisDataset) -> Self {
        let design = FeatureSpec::intercept_only().resolve(ds).expect("intercept design");
        let (groups_strata, group_of_stratum) = groups_for(ds, ModelScope::PerStratum);
        let sizes = ds.stratum_sizes();
        Self {
            groups: groups_strata
                .into_iter()
                .map(|strata| CompletenessGroup {
                    n_members: strata.iter().map(|k| sizes[k - 1]).sum(),
                    strata,
                    psi: None,
                    info: Matrix::zeros(1, 1),
                    iterations: 0,
                })
                .collect(),
            design,
            scope: ModelScope::PerStratum,
            structural: None,
            group_of_stratum,
            score_contrib: vec![Vector::zeros(1); ds.n()],
            min_fitted_prob: 1.0,
            floor_hits: AtomicUsize::new(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::rec;
    use approx::assert_relative_eq;

    fn dataset(records: Vec<SubjectRecord>, k: usize) -> AnalysisDataset {
        AnalysisDataset::new(records, vec!["z".into()], 2, k, None).unwrap()
    }

    /// Ten failures, seven complete, plus censored records.
    fn seventy_percent() -> AnalysisDataset {
        let mut v: Vec<SubjectRecord> = (0..10)
            .map(|i| rec(1.0 + i as f64, true, i < 7, (i < 7).then_some(1 + i % 2), &[((i * 7) % 10) as f64 / 10.0], 1))
            .collect();
        v.extend((0..5).map(|i| rec(0.5 + i as f64, false, true, None, &[0.3], 1)));
        dataset(v, 1)
    }

    #[test]
    fn intercept_only_matches_complete_fraction() {
        let ds = seventy_percent();
        let fit = fit_completeness(&ds, &CompletenessSpec::new(FeatureSpec::intercept_only())).unwrap();
        let r = fit.r_hat(&ds.records()[0]).unwrap();
        assert_relative_eq!(r, 0.7, epsilon = 1e-10);
        assert_eq!(fit.pi(&ds.records()[12]).unwrap(), 1.0);
        assert_relative_eq!(fit.min_fitted_prob, 0.7, epsilon = 1e-10);
    }

    #[test]
    fn score_vanishes_at_the_fit() {
        let ds = seventy_percent();
        let fit = fit_completeness(&ds, &CompletenessSpec::new(FeatureSpec::parse("z"))).unwrap();
        let total = fit.score_contrib.iter().fold(Vector::zeros(2), |acc, s| acc + s);
        assert!(total.amax() < 1e-8, "{total}");
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let ds = seventy_percent();
        let mut fit = fit_completeness(&ds, &CompletenessSpec::new(FeatureSpec::parse("z"))).unwrap();
        let rec = ds.records()[3].clone();
        let analytic = fit.dpi_dpsi(&rec).unwrap();
        let psi = fit.groups[0].psi.clone().unwrap();
        let h = 1e-6;
        for c in 0..2 {
            let mut up = psi.clone();
            up[c] += h;
            let mut down = psi.clone();
            down[c] -= h;
            fit.groups[0].psi = Some(up);
            let pu = fit.pi(&rec).unwrap();
            fit.groups[0].psi = Some(down);
            let pd = fit.pi(&rec).unwrap();
            assert_relative_eq!((pu - pd) / (2.0 * h), analytic[c], max_relative = 1e-6);
        }
    }

    #[test]
    fn all_complete_stratum_is_degenerate() {
        let mut v: Vec<SubjectRecord> = (0..6).map(|i| rec(1.0 + i as f64, true, true, Some(1), &[0.1], 1)).collect();
        v.extend((0..6).map(|i| rec(1.0 + i as f64, true, i % 2 == 0, (i % 2 == 0).then_some(2), &[0.1], 2)));
        let ds = dataset(v, 2);
        let fit = fit_completeness(&ds, &CompletenessSpec::new(FeatureSpec::intercept_only())).unwrap();
        assert!(fit.group(1).is_degenerate());
        assert!(!fit.group(2).is_degenerate());
        assert_eq!(fit.r_hat(&ds.records()[0]).unwrap(), 1.0);
        assert_eq!(fit.dpi_dpsi(&ds.records()[0]).unwrap(), Vector::zeros(1));
        assert_relative_eq!(fit.r_hat(&ds.records()[6]).unwrap(), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn no_complete_failure_is_an_error() {
        let v = (0..4).map(|i| rec(1.0 + i as f64, true, false, None, &[0.1], 1)).collect();
        let ds = dataset(v, 1);
        assert!(fit_completeness(&ds, &CompletenessSpec::new(FeatureSpec::intercept_only())).is_err());
    }

    #[test]
    fn floor_is_applied_and_counted() {
        let ds = seventy_percent();
        let mut fit = fit_completeness(&ds, &CompletenessSpec::new(FeatureSpec::intercept_only())).unwrap();
        fit.groups[0].psi = Some(Vector::from_vec(vec![-20.0]));
        assert_eq!(fit.pi(&ds.records()[0]).unwrap(), POSITIVITY_FLOOR);
        assert_eq!(fit.pi(&ds.records()[1]).unwrap(), POSITIVITY_FLOOR);
        assert_eq!(fit.floor_hits(), 2);
    }

    #[test]
    fn structural_records_are_complete_by_construction() {
        let mut v: Vec<SubjectRecord> = (0..10)
            .map(|i| rec(1.0 + i as f64, true, i < 6, (i < 6).then_some(1), &[0.2], 1))
            .collect();
        for r in v.iter_mut().take(3) {
            r.aux = Some(0.1);
            r.cause = Some(2);
            r.complete = true;
        }
        let ds = dataset(v, 1);
        let mut spec = CompletenessSpec::new(FeatureSpec::intercept_only());
        spec.structural = Some(StructuralCause {
            cause: 2,
            aux_threshold: 0.3,
        });
        let fit = fit_completeness(&ds, &spec).unwrap();
        assert_eq!(fit.pi(&ds.records()[0]).unwrap(), 1.0);
        // Seven records enter the likelihood, three of them complete.
        assert_relative_eq!(fit.r_hat(&ds.records()[5]).unwrap(), 3.0 / 7.0, epsilon = 1e-10);
    }
}
