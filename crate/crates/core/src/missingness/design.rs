use serde::{Deserialize, Serialize};

use crate::data::{AnalysisDataset, SubjectRecord};
use crate::error::{Error, Result};

/// One column of a missingness-model design built from `W = (T, Z, A)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Feature {
    Intercept,
    /// Follow-up time `t`.
    Time,
    /// Auxiliary mark `a`.
    Aux,
    Covariate(usize),
}

/// A user-declared feature list. The intercept is implicit; `t` and `a` are
/// reserved for time and auxiliary mark, any other name must be a dataset
/// covariate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub names: Vec<String>,
}

impl FeatureSpec {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            names: names.into_iter().map(Into::into).collect(),
        }
    }

    /// Parses a comma-separated list such as `"z1,a"`. An empty string or
    /// `"1"` yields an intercept-only design.
    pub fn parse(s: &str) -> Self {
        Self::new(
            s.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty() && *t != "1"),
        )
    }

    pub fn intercept_only() -> Self {
        Self { names: Vec::new() }
    }

    pub fn resolve(&self, ds: &AnalysisDataset) -> Result<Design> {
        let mut features = vec![Feature::Intercept];
        let mut labels = vec!["(intercept)".to_string()];
        for name in &self.names {
            let f = match name.as_str() {
                "t" => Feature::Time,
                "a" => Feature::Aux,
                other => {
                    let idx = ds
                        .covariate_names()
                        .iter()
                        .position(|c| c == other)
                        .ok_or_else(|| {
                            Error::Config(format!("unknown feature `{other}` in model formula"))
                        })?;
                    Feature::Covariate(idx)
                }
            };
            if features.contains(&f) {
                return Err(Error::Config(format!("feature `{name}` listed twice")));
            }
            features.push(f);
            labels.push(name.clone());
        }
        Ok(Design { features, labels })
    }
}

/// A resolved feature list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub features: Vec<Feature>,
    pub labels: Vec<String>,
}

impl Design {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Feature row for a record. Fails when the design uses the auxiliary
    /// mark and the record has none.
    pub fn row(&self, rec: &SubjectRecord) -> Result<Vec<f64>> {
        self.features
            .iter()
            .map(|f| match f {
                Feature::Intercept => Ok(1.0),
                Feature::Time => Ok(rec.time),
                Feature::Aux => rec.aux.ok_or_else(|| {
                    Error::Invalid("auxiliary mark required by the model is missing".into())
                }),
                Feature::Covariate(i) => Ok(rec.covariates[*i]),
            })
            .collect()
    }
}
