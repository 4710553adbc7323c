//! One-call analysis: nuisance models, estimation, and sandwich variance.

use serde::{Deserialize, Serialize};

use crate::data::{AnalysisDataset, StructuralCause};
use crate::error::Result;
use crate::estimation::{solve, Method, ModelFit};
use crate::inference::{all_pairs, efficacy_report, test_overall, test_per_strain, test_sieve, McSettings, TestKind};
use crate::missingness::{
    fit_cause_model, fit_completeness, CauseModelFit, CauseSpec, CompletenessModelFit, CompletenessSpec, FeatureSpec,
    ModelScope,
};
use crate::report::{coefficients, MethodReport};
use crate::variance::{attach_variance, IpwResidualWeight};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub completeness: CompletenessSpec,
    pub cause: CauseSpec,
    pub ipw_weight: IpwResidualWeight,
}

impl AnalysisOptions {
    pub fn new(completeness: FeatureSpec, cause: FeatureSpec) -> Self {
        Self {
            completeness: CompletenessSpec::new(completeness),
            cause: CauseSpec::new(cause),
            ipw_weight: IpwResidualWeight::default(),
        }
    }

    pub fn with_structural(mut self, s: Option<StructuralCause>) -> Self {
        self.completeness.structural = s;
        self.cause.structural = s;
        self
    }

    pub fn with_scope(mut self, completeness: ModelScope, cause: ModelScope) -> Self {
        self.completeness.scope = completeness;
        self.cause.scope = cause;
        self
    }
}

/// Nuisance-model fits shared by the IPW and AIPW analyses of a dataset.
#[derive(Debug, Clone)]
pub struct NuisanceFits {
    pub completeness: Option<CompletenessModelFit>,
    pub cause: Option<CauseModelFit>,
}

impl NuisanceFits {
    /// Fits whichever models `methods` need.
    pub fn fit(ds: &AnalysisDataset, methods: &[Method], opts: &AnalysisOptions) -> Result<Self> {
        let need_cm = methods.iter().any(|m| *m != Method::Cc);
        let need_rm = methods.contains(&Method::Aipw);
        Ok(Self {
            completeness: need_cm.then(|| fit_completeness(ds, &opts.completeness)).transpose()?,
            cause: need_rm.then(|| fit_cause_model(ds, &opts.cause)).transpose()?,
        })
    }
}

/// Fits `method` and attaches its sandwich covariance.
pub fn fit_with_variance(
    ds: &AnalysisDataset,
    method: Method,
    nuisance: &NuisanceFits,
    weight: IpwResidualWeight,
) -> Result<ModelFit> {
    let cm = nuisance.completeness.as_ref();
    let rm = nuisance.cause.as_ref();
    let mut fit = solve(ds, method, cm, rm)?;
    attach_variance(ds, &mut fit, cm, rm, weight)?;
    Ok(fit)
}

/// Settings for turning a fit into a [`MethodReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportOptions {
    pub level: f64,
    pub ve0: f64,
    pub tests: Vec<TestKind>,
    pub mc: McSettings,
    /// Ordered VD pairs; all pairs when `None`.
    pub pairs: Option<Vec<(usize, usize)>>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            ve0: 0.0,
            tests: Vec::new(),
            mc: McSettings::default(),
            pairs: None,
        }
    }
}

/// Causes entering the overall and sieve tests: all but a structural one.
pub fn tested_causes(n_causes: usize, structural: Option<StructuralCause>) -> Vec<usize> {
    (1..=n_causes)
        .filter(|&j| structural.is_none_or(|s| s.cause != j))
        .collect()
}

/// Coefficients, efficacies, and the requested tests for one fit.
///
/// Per-strain tests cover every cause; the overall and sieve tests leave out
/// the structural cause.
pub fn method_report(
    fit: &ModelFit,
    structural: Option<StructuralCause>,
    opts: &ReportOptions,
) -> Result<MethodReport> {
    let pairs = opts.pairs.clone().unwrap_or_else(|| all_pairs(fit.n_causes()));
    let eff = efficacy_report(fit, &pairs, opts.level)?;
    let causes = tested_causes(fit.n_causes(), structural);
    let all: Vec<usize> = (1..=fit.n_causes()).collect();
    let mut tests = Vec::new();
    for kind in &opts.tests {
        tests.push(match kind {
            TestKind::Overall => test_overall(fit, &causes, opts.ve0, &opts.mc)?,
            TestKind::PerStrain => test_per_strain(fit, &all, opts.ve0, &opts.mc)?,
            TestKind::Sieve => test_sieve(fit, &causes, &opts.mc)?,
        });
    }
    let with_mc = !tests.is_empty();
    Ok(MethodReport {
        method: fit.method,
        n: fit.n,
        level: opts.level,
        coefficients: coefficients(fit)?,
        ve: eff.ve,
        vd: eff.vd,
        tests,
        seed: with_mc.then_some(opts.mc.seed),
        draws: with_mc.then_some(opts.mc.draws),
        diagnostics: fit.diagnostics.clone(),
        warnings: fit.warnings.clone(),
    })
}
