use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generator::{TrialGenerator, GENERATOR_NAME};
use super::scenario::ScenarioConfig;
use crate::error::{Error, Result};
use crate::estimation::{Method, ModelFit};
use crate::inference::{
    c0_of, efficacy_report, overall_test, per_strain_test, sieve_test, AlphaEstimates, McSettings, TestKind,
};
use crate::missingness::FeatureSpec;
use crate::pipeline::{fit_with_variance, AnalysisOptions, NuisanceFits};
use crate::variance::IpwResidualWeight;

/// A replication study of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub scenario: ScenarioConfig,
    pub methods: Vec<Method>,
    pub tests: Vec<TestKind>,
    pub ve0: f64,
    pub mc: McSettings,
    pub level: f64,
    pub ipw_weight: IpwResidualWeight,
    /// Completeness and cause model features.
    pub completeness_features: String,
    pub cause_features: String,
    /// Largest tolerated fraction of failed replicates per method.
    pub max_failure_frac: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            methods: Method::ALL.to_vec(),
            tests: Vec::new(),
            ve0: 0.3,
            mc: McSettings {
                draws: 20_000,
                ..McSettings::default()
            },
            level: 0.95,
            ipw_weight: IpwResidualWeight::default(),
            completeness_features: "z1,a".into(),
            cause_features: "z1,a".into(),
            max_failure_frac: 0.02,
        }
    }
}

impl StudyConfig {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self {
            scenario,
            ..Self::default()
        }
    }

    pub fn with_methods(mut self, methods: &[Method]) -> Self {
        self.methods = methods.to_vec();
        self
    }

    pub fn with_tests(mut self, tests: &[TestKind]) -> Self {
        self.tests = tests.to_vec();
        self
    }

    fn options(&self) -> AnalysisOptions {
        let mut o = AnalysisOptions::new(
            FeatureSpec::parse(&self.completeness_features),
            FeatureSpec::parse(&self.cause_features),
        );
        o.ipw_weight = self.ipw_weight;
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub method: Method,
    pub parameter: String,
    pub truth: f64,
    pub bias: f64,
    /// Sample standard deviation of the estimates; `None` with fewer than
    /// two replicates.
    pub sse: Option<f64>,
    /// Mean estimated standard error.
    pub ese: f64,
    /// Coverage of the nominal interval.
    pub cp: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub method: Method,
    pub test: String,
    pub rejection_rate: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub method: Method,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub scenario: String,
    pub n_reps: usize,
    pub seed: u64,
    pub generator: String,
    pub censor_rate: f64,
    pub mean_censored_fraction: f64,
    pub params: Vec<ParamSummary>,
    pub tests: Vec<TestSummary>,
    pub failures: Vec<ReplicateFailure>,
    pub max_failure_frac: f64,
    pub warnings: Vec<String>,
}

impl StudySummary {
    pub fn param(&self, method: Method, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.method == method && p.parameter == name)
    }

    pub fn test(&self, method: Method, name: &str) -> Option<&TestSummary> {
        self.tests.iter().find(|t| t.method == method && t.test == name)
    }

    pub fn failures_for(&self, method: Method) -> usize {
        self.failures.iter().filter(|f| f.method == method).count()
    }

    /// Whether every method stayed within the tolerated failure fraction.
    pub fn within_failure_budget(&self) -> bool {
        let mut methods: Vec<Method> = self.params.iter().map(|p| p.method).collect();
        methods.extend(self.failures.iter().map(|f| f.method));
        methods.dedup();
        methods
            .iter()
            .all(|&m| self.failures_for(m) as f64 <= self.max_failure_frac * self.n_reps as f64)
    }
}

/// Estimate, standard error and interval of one target in one replicate.
#[derive(Debug, Clone)]
struct Estimate {
    est: f64,
    se: f64,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone)]
struct MethodOutcome {
    estimates: Vec<Estimate>,
    rejections: Vec<(String, bool)>,
}

struct ReplicateOutcome {
    censored_fraction: f64,
    methods: Vec<std::result::Result<MethodOutcome, String>>,
}

/// Parameter names and true values: `alpha_j`, `VE_j`, and `VD(2,1)`.
fn targets(cfg: &ScenarioConfig) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = cfg
        .alpha
        .iter()
        .enumerate()
        .map(|(j, a)| (format!("alpha{}", j + 1), *a))
        .collect();
    out.extend(cfg.alpha.iter().enumerate().map(|(j, a)| (format!("VE{}", j + 1), 1.0 - a.exp())));
    if cfg.alpha.len() >= 2 {
        out.push(("VD(2,1)".into(), (cfg.alpha[1] - cfg.alpha[0]).exp()));
    }
    out
}

fn method_outcome(fit: &ModelFit, study: &StudyConfig, mc: &McSettings) -> Result<MethodOutcome> {
    let j = fit.n_causes();
    let pairs: Vec<(usize, usize)> = if j >= 2 { vec![(2, 1)] } else { Vec::new() };
    let rep = efficacy_report(fit, &pairs, study.level)?;
    let zq = crate::inference::efficacy::z_quantile(study.level);
    let mut estimates: Vec<Estimate> = rep
        .ve
        .iter()
        .map(|v| Estimate {
            est: v.alpha,
            se: v.se_alpha,
            lo: v.alpha - zq * v.se_alpha,
            hi: v.alpha + zq * v.se_alpha,
        })
        .collect();
    estimates.extend(rep.ve.iter().map(|v| Estimate {
        est: v.ve,
        se: v.se_ve,
        lo: v.ci_log.0,
        hi: v.ci_log.1,
    }));
    estimates.extend(rep.vd.iter().map(|d| Estimate {
        est: d.vd,
        se: d.se,
        lo: d.ci.0,
        hi: d.ci.1,
    }));
    let causes: Vec<usize> = (1..=j).collect();
    let est = AlphaEstimates::from_fit(fit, &causes)?;
    let mut rejections = Vec::new();
    for kind in &study.tests {
        let report = match kind {
            TestKind::Overall => overall_test(&est, c0_of(study.ve0)?, mc)?,
            TestKind::PerStrain => per_strain_test(&est, c0_of(study.ve0)?, mc)?,
            TestKind::Sieve => sieve_test(&est, mc)?,
        };
        rejections.extend(report.results.into_iter().map(|r| (r.name, r.reject)));
    }
    Ok(MethodOutcome { estimates, rejections })
}

fn run_replicate(gen: &TrialGenerator, study: &StudyConfig, opts: &AnalysisOptions, rep: usize) -> ReplicateOutcome {
    let ds = match gen.generate(rep as u64) {
        Ok(ds) => ds,
        Err(e) => {
            return ReplicateOutcome {
                censored_fraction: f64::NAN,
                methods: study.methods.iter().map(|_| Err(e.to_string())).collect(),
            }
        }
    };
    let censored_fraction = ds.records().iter().filter(|r| !r.event).count() as f64 / ds.n() as f64;
    let methods = study
        .methods
        .iter()
        .enumerate()
        .map(|(m_idx, &m)| {
            let nuisance = NuisanceFits::fit(&ds, &[m], opts).map_err(|e| e.to_string())?;
            let fit = fit_with_variance(&ds, m, &nuisance, study.ipw_weight).map_err(|e| e.to_string())?;
            let mc = McSettings {
                seed: study
                    .mc
                    .seed
                    .wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
                    .wrapping_add(m_idx as u64),
                ..study.mc
            };
            method_outcome(&fit, study, &mc).map_err(|e| e.to_string())
        })
        .collect();
    ReplicateOutcome {
        censored_fraction,
        methods,
    }
}

/// Runs `n_reps` replicates in parallel and aggregates them in replicate
/// order, so the summary does not depend on scheduling.
pub fn run_study(study: &StudyConfig) -> Result<StudySummary> {
    if study.methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    if study.scenario.n_reps == 0 {
        return Err(Error::Config("n_reps must be positive".into()));
    }
    let gen = TrialGenerator::new(study.scenario.clone())?;
    let opts = study.options();
    let outcomes: Vec<ReplicateOutcome> = (0..study.scenario.n_reps)
        .into_par_iter()
        .map(|rep| run_replicate(&gen, study, &opts, rep))
        .collect();
    Ok(aggregate(study, &gen, outcomes))
}

fn aggregate(study: &StudyConfig, gen: &TrialGenerator, outcomes: Vec<ReplicateOutcome>) -> StudySummary {
    let tg = targets(&study.scenario);
    let mut warnings = Vec::new();
    let mut params = Vec::new();
    let mut tests = Vec::new();
    let mut failures = Vec::new();
    for (m_idx, &method) in study.methods.iter().enumerate() {
        let mut ok: Vec<&MethodOutcome> = Vec::new();
        for (rep, o) in outcomes.iter().enumerate() {
            match &o.methods[m_idx] {
                Ok(mo) => ok.push(mo),
                Err(message) => failures.push(ReplicateFailure {
                    replicate: rep,
                    method,
                    message: message.clone(),
                }),
            }
        }
        if ok.is_empty() {
            continue;
        }
        let n = ok.len();
        if n < 2 {
            warnings.push(format!("{method}: SSE undefined with {n} successful replicate(s)"));
        }
        for (t, (name, truth)) in tg.iter().enumerate() {
            let est: Vec<f64> = ok.iter().map(|o| o.estimates[t].est).collect();
            let mean = est.iter().sum::<f64>() / n as f64;
            let sse = (n > 1).then(|| (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
            params.push(ParamSummary {
                method,
                parameter: name.clone(),
                truth: *truth,
                bias: mean - truth,
                sse,
                ese: ok.iter().map(|o| o.estimates[t].se).sum::<f64>() / n as f64,
                cp: ok
                    .iter()
                    .filter(|o| o.estimates[t].lo <= *truth && *truth <= o.estimates[t].hi)
                    .count() as f64
                    / n as f64,
                n,
            });
        }
        let names: Vec<String> = ok[0].rejections.iter().map(|(s, _)| s.clone()).collect();
        for (t, name) in names.into_iter().enumerate() {
            tests.push(TestSummary {
                method,
                test: name,
                rejection_rate: ok.iter().filter(|o| o.rejections[t].1).count() as f64 / n as f64,
                n,
            });
        }
    }
    let fracs: Vec<f64> = outcomes
        .iter()
        .map(|o| o.censored_fraction)
        .filter(|f| f.is_finite())
        .collect();
    StudySummary {
        scenario: study.scenario.name.clone(),
        n_reps: study.scenario.n_reps,
        seed: study.scenario.seed,
        generator: GENERATOR_NAME.into(),
        censor_rate: gen.censor_rate,
        mean_censored_fraction: fracs.iter().sum::<f64>() / fracs.len().max(1) as f64,
        params,
        tests,
        failures,
        max_failure_frac: study.max_failure_frac,
        warnings,
    }
}
