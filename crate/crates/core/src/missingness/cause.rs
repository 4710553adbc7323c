use serde::{Deserialize, Serialize};

use super::design::{Design, FeatureSpec};
use super::glm::{fit_multinomial, GlmFailure};
use super::{group_label, groups_for, ModelScope};
use crate::data::{AnalysisDataset, StructuralCause, SubjectRecord};
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Configuration of the multinomial cause model `rho_kj(W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseSpec {
    pub features: FeatureSpec,
    pub scope: ModelScope,
    pub structural: Option<StructuralCause>,
}

impl CauseSpec {
    pub fn new(features: FeatureSpec) -> Self {
        Self {
            features,
            scope: ModelScope::PerStratum,
            structural: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CauseGroup {
    pub strata: Vec<usize>,
    /// One coefficient vector per modelled cause except the last (the
    /// reference).
    pub phi: Vec<Vector>,
    pub n_complete: usize,
    pub iterations: usize,
}

/// Fitted cause-distribution model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CauseModelFit {
    pub design: Design,
    pub scope: ModelScope,
    pub structural: Option<StructuralCause>,
    pub n_causes: usize,
    /// Causes (1-based) handled by the multinomial model; the last one is the
    /// reference category.
    pub modeled: Vec<usize>,
    pub groups: Vec<CauseGroup>,
    pub group_of_stratum: Vec<usize>,
}

/// Fits the multinomial-logistic cause model on complete failures.
pub fn fit_cause_model(ds: &AnalysisDataset, spec: &CauseSpec) -> Result<CauseModelFit> {
    let design = spec.features.resolve(ds)?;
    let structural = spec.structural.as_ref();
    if let Some(s) = structural {
        if s.cause == 0 || s.cause > ds.n_causes() {
            return Err(Error::Config(format!(
                "structural cause {} outside 1..={}",
                s.cause,
                ds.n_causes()
            )));
        }
    }
    let modeled: Vec<usize> = (1..=ds.n_causes())
        .filter(|&j| structural.is_none_or(|s| s.cause != j))
        .collect();
    let m = modeled.len();
    let (groups_strata, group_of_stratum) = groups_for(ds, spec.scope);
    let mut groups = Vec::with_capacity(groups_strata.len());

    for strata in groups_strata {
        let label = group_label(&strata);
        let used: Vec<&SubjectRecord> = ds
            .records()
            .iter()
            .filter(|r| strata.contains(&r.stratum) && r.event && r.complete)
            .filter(|r| !structural.is_some_and(|s| s.applies(r)))
            .collect();
        let mut y = Vec::with_capacity(used.len());
        for r in &used {
            let c = r.cause.expect("complete failure has a cause");
            match modeled.iter().position(|&j| j == c) {
                Some(pos) => y.push(pos),
                None => {
                    return Err(Error::Invalid(format!(
                        "record with structural cause {c} has auxiliary mark above the threshold"
                    )))
                }
            }
        }
        if m > 1 {
            for (pos, &j) in modeled.iter().enumerate() {
                if !y.contains(&pos) {
                    return Err(Error::Unidentified {
                        cause: j,
                        stratum: label.clone(),
                        reason: "no complete failures of this cause".into(),
                    });
                }
            }
        }
        if m <= 1 {
            groups.push(CauseGroup {
                strata,
                phi: Vec::new(),
                n_complete: used.len(),
                iterations: 0,
            });
            continue;
        }
        let rows = used
            .iter()
            .map(|r| design.row(r))
            .collect::<Result<Vec<_>>>()?;
        let fit = fit_multinomial(&rows, &y, m).map_err(|f| match f {
            GlmFailure::Separation(idx) => Error::Separation {
                stratum: label.clone(),
                feature: design.labels[idx].clone(),
            },
            GlmFailure::NoConvergence { iterations, trace } => Error::NoConvergence {
                what: format!("cause model for stratum {label}"),
                iterations,
                trace,
            },
        })?;
        let q = design.len();
        let phi = (0..m - 1)
            .map(|c| Vector::from_column_slice(&fit.coef.as_slice()[c * q..(c + 1) * q]))
            .collect();
        groups.push(CauseGroup {
            strata,
            phi,
            n_complete: used.len(),
            iterations: fit.iterations,
        });
    }

    Ok(CauseModelFit {
        design,
        scope: spec.scope,
        structural: spec.structural,
        n_causes: ds.n_causes(),
        modeled,
        groups,
        group_of_stratum,
    })
}

impl CauseModelFit {
    pub fn group(&self, stratum: usize) -> &CauseGroup {
        &self.groups[self.group_of_stratum[stratum - 1]]
    }

    /// Probability vector over causes `1..=J` (index `j-1`) for a record.
    /// Records meeting the structural rule get the indicator of that cause.
    pub fn rho(&self, rec: &SubjectRecord) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_causes];
        if let Some(s) = self.structural.filter(|s| s.applies(rec)) {
            out[s.cause - 1] = 1.0;
            return Ok(out);
        }
        let m = self.modeled.len();
        if m == 1 {
            out[self.modeled[0] - 1] = 1.0;
            return Ok(out);
        }
        let x = Vector::from_vec(self.design.row(rec)?);
        let etas: Vec<f64> = self.group(rec.stratum).phi.iter().map(|p| p.dot(&x)).collect();
        let mx = etas.iter().copied().fold(0.0_f64, f64::max);
        let denom = (-mx).exp() + etas.iter().map(|e| (e - mx).exp()).sum::<f64>();
        for (c, e) in etas.iter().enumerate() {
            out[self.modeled[c] - 1] = (e - mx).exp() / denom;
        }
        out[self.modeled[m - 1] - 1] = (-mx).exp() / denom;
        Ok(out)
    }

    /// `rho` for every failure of the dataset; censored records get zeros.
    pub fn rho_matrix(&self, ds: &AnalysisDataset) -> Result<Vec<Vec<f64>>> {
        ds.records()
            .iter()
            .map(|r| if r.event { self.rho(r) } else { Ok(vec![0.0; self.n_causes]) })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::rec;
    use crate::data::SubjectRecord;
    use approx::assert_relative_eq;

    fn dataset(records: Vec<SubjectRecord>, j: usize) -> AnalysisDataset {
        AnalysisDataset::new(records, vec!["z".into()], j, 1, None).unwrap()
    }

    /// Complete failures with causes 1, 2, 3 in proportions 2:3:5, plus
    /// incomplete failures.
    fn mixed() -> AnalysisDataset {
        let causes = [1, 1, 2, 2, 2, 3, 3, 3, 3, 3];
        let mut v: Vec<SubjectRecord> = causes
            .iter()
            .enumerate()
            .map(|(i, &c)| rec(1.0 + i as f64, true, true, Some(c), &[((i * 3) % 10) as f64 / 10.0], 1))
            .collect();
        v.extend((0..4).map(|i| rec(0.5 + i as f64, true, false, None, &[0.4], 1)));
        v.push(rec(2.5, false, true, None, &[0.0], 1));
        dataset(v, 3)
    }

    #[test]
    fn intercept_only_probabilities_are_cause_shares() {
        let ds = mixed();
        let fit = fit_cause_model(&ds, &CauseSpec::new(FeatureSpec::intercept_only())).unwrap();
        let rho = fit.rho(&ds.records()[11]).unwrap();
        assert_relative_eq!(rho[0], 0.2, epsilon = 1e-9);
        assert_relative_eq!(rho[1], 0.3, epsilon = 1e-9);
        assert_relative_eq!(rho[2], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn probabilities_sum_to_one_and_censored_rows_are_zero() {
        let ds = mixed();
        let fit = fit_cause_model(&ds, &CauseSpec::new(FeatureSpec::parse("z"))).unwrap();
        let m = fit.rho_matrix(&ds).unwrap();
        for (r, row) in ds.records().iter().zip(&m) {
            let s: f64 = row.iter().sum();
            if r.event {
                assert_relative_eq!(s, 1.0, epsilon = 1e-12);
                assert!(row.iter().all(|&p| p > 0.0));
            } else {
                assert_eq!(s, 0.0);
            }
        }
    }

    #[test]
    fn structural_records_get_an_indicator() {
        let mut ds_records = mixed().records().to_vec();
        for r in ds_records.iter_mut().filter(|r| r.cause == Some(3)) {
            r.aux = Some(0.05);
        }
        let ds = dataset(ds_records, 3);
        let mut spec = CauseSpec::new(FeatureSpec::intercept_only());
        spec.structural = Some(StructuralCause {
            cause: 3,
            aux_threshold: 0.1,
        });
        let fit = fit_cause_model(&ds, &spec).unwrap();
        assert_eq!(fit.rho(&ds.records()[6]).unwrap(), vec![0.0, 0.0, 1.0]);
        let rho = fit.rho(&ds.records()[11]).unwrap();
        assert_relative_eq!(rho[0], 0.4, epsilon = 1e-9);
        assert_relative_eq!(rho[1], 0.6, epsilon = 1e-9);
        assert_eq!(rho[2], 0.0);
    }

    #[test]
    fn absent_cause_is_unidentified() {
        let v = (0..6)
            .map(|i| rec(1.0 + i as f64, true, true, Some(1 + i % 2), &[0.1], 1))
            .collect();
        let ds = dataset(v, 3);
        let err = fit_cause_model(&ds, &CauseSpec::new(FeatureSpec::intercept_only())).unwrap_err();
        assert!(matches!(err, Error::Unidentified { cause: 3, .. }), "{err}");
    }
}
