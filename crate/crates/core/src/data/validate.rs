use serde::{Deserialize, Serialize};

use super::AnalysisDataset;
use crate::missingness::{CompletenessModelFit, POSITIVITY_FLOOR};

/// Outcome of [`validate`]. Errors are fatal; warnings flag identifiability
/// and positivity concerns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
    /// Smallest fitted completeness probability over failures, when a
    /// completeness fit was supplied.
    pub min_fitted_prob: Option<f64>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    pub positivity_floor: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            positivity_floor: POSITIVITY_FLOOR,
        }
    }
}

/// Checks per-stratum identifiability of a parsed dataset.
pub fn validate(ds: &AnalysisDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let members = ds.strata_members();
    for (k0, idx) in members.iter().enumerate() {
        let k = k0 + 1;
        if idx.is_empty() {
            report.warnings.push(format!("stratum {k} has no records"));
            continue;
        }
        let mut counts = vec![0usize; ds.n_causes()];
        for &i in idx {
            let r = &ds.records()[i];
            if let (true, true, Some(c)) = (r.event, r.complete, r.cause) {
                counts[c - 1] += 1;
            }
        }
        for (j0, &c) in counts.iter().enumerate() {
            if c == 0 {
                report
                    .warnings
                    .push(format!("cause {} unidentified in stratum {k}", j0 + 1));
            }
        }
        for (c, name) in ds.covariate_names().iter().enumerate() {
            let first = ds.records()[idx[0]].covariates[c];
            if idx.iter().all(|&i| ds.records()[i].covariates[c] == first) {
                report
                    .warnings
                    .push(format!("covariate `{name}` has zero variance in stratum {k}"));
            }
        }
    }
    report
}

/// [`validate`] plus a positivity check of fitted completeness probabilities.
pub fn validate_with_fit(
    ds: &AnalysisDataset,
    fit: &CompletenessModelFit,
    opts: ValidationOptions,
) -> ValidationReport {
    let mut report = validate(ds);
    let mut min_r = 1.0_f64;
    let mut low = vec![0usize; ds.n_strata()];
    for rec in ds.records().iter().filter(|r| r.event) {
        match fit.r_hat(rec) {
            Ok(r) => {
                min_r = min_r.min(r);
                if r < opts.positivity_floor {
                    low[rec.stratum - 1] += 1;
                }
            }
            Err(e) => report.errors.push(e.to_string()),
        }
    }
    for (k0, &c) in low.iter().enumerate() {
        if c > 0 {
            report.warnings.push(format!(
                "positivity: {c} failures in stratum {} have fitted completeness probability below {:e}",
                k0 + 1,
                opts.positivity_floor
            ));
        }
    }
    report.min_fitted_prob = Some(min_r);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::rec;

    #[test]
    fn missing_cause_in_stratum_is_reported() {
        let recs = vec![
            rec(1.0, true, true, Some(1), &[0.0], 1),
            rec(2.0, true, true, Some(2), &[1.0], 1),
            rec(1.5, true, true, Some(2), &[0.0], 2),
            rec(2.5, false, true, None, &[1.0], 2),
        ];
        let ds = AnalysisDataset::new(recs, vec!["z".into()], 2, 2, None).unwrap();
        let rep = validate(&ds);
        assert!(rep.is_ok());
        assert_eq!(rep.warnings, vec!["cause 1 unidentified in stratum 2".to_string()]);
    }

    #[test]
    fn constant_covariate_is_reported() {
        let recs = vec![
            rec(1.0, true, true, Some(1), &[1.0, 0.0], 1),
            rec(2.0, false, true, None, &[1.0, 1.0], 1),
        ];
        let ds = AnalysisDataset::new(recs, vec!["z1".into(), "z2".into()], 1, 1, None).unwrap();
        let rep = validate(&ds);
        assert_eq!(rep.warnings, vec!["covariate `z1` has zero variance in stratum 1".to_string()]);
    }
}
