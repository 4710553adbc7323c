//! Per-stratum completeness and cause-distribution models.

mod cause;
mod completeness;
mod design;
mod glm;

pub use cause::{fit_cause_model, CauseGroup, CauseModelFit, CauseSpec};
pub use completeness::{
    fit_completeness, CompletenessGroup, CompletenessModelFit, CompletenessSpec, POSITIVITY_FLOOR,
};
pub use design::{Design, Feature, FeatureSpec};

use serde::{Deserialize, Serialize};

use crate::data::AnalysisDataset;

/// Whether a missingness model gets its own coefficients in each stratum or
/// one coefficient vector shared by all strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelScope {
    #[default]
    PerStratum,
    Pooled,
}

/// Fitting groups (lists of 1-based strata) and the group index of each
/// stratum.
pub(crate) fn groups_for(ds: &AnalysisDataset, scope: ModelScope) -> (Vec<Vec<usize>>, Vec<usize>) {
    match scope {
        ModelScope::PerStratum => (
            (1..=ds.n_strata()).map(|k| vec![k]).collect(),
            (0..ds.n_strata()).collect(),
        ),
        ModelScope::Pooled => (vec![(1..=ds.n_strata()).collect()], vec![0; ds.n_strata()]),
    }
}

pub(crate) fn group_label(strata: &[usize]) -> String {
    if strata.len() == 1 {
        strata[0].to_string()
    } else {
        "pooled".to_string()
    }
}
