use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde_json::{json, Value};
use strainve_core::data::{load_dataset, Schema};
use strainve_core::estimation::Method;
use strainve_core::inference::TestKind;
use strainve_core::missingness::{FeatureSpec, ModelScope};
use strainve_core::pipeline::AnalysisOptions;
use strainve_core::simulation::{generate_pseudo_trial, generate_trial, CauseCoding, PseudoTrialConfig, ScenarioConfig};
use strainve_core::variance::IpwResidualWeight;
use strainve_core::{AnalysisDataset, StructuralCause};

use crate::config::RunConfig;

/// A dataset ready for analysis together with how it was obtained.
pub struct Input {
    pub ds: AnalysisDataset,
    pub schema: Schema,
    pub structural: Option<StructuralCause>,
    pub options: AnalysisOptions,
    pub generated: bool,
    pub source: Value,
}

pub fn methods(cfg: &RunConfig) -> anyhow::Result<Vec<Method>> {
    let spec = cfg.method.as_deref().unwrap_or("all");
    if spec.eq_ignore_ascii_case("all") {
        return Ok(Method::ALL.to_vec());
    }
    let mut out: Vec<Method> = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: Method = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        bail!("no method selected");
    }
    Ok(out)
}

/// `None` means every test that applies.
pub fn tests(cfg: &RunConfig) -> anyhow::Result<Option<Vec<TestKind>>> {
    let Some(spec) = cfg.tests.as_deref() else {
        return Ok(None);
    };
    if spec.eq_ignore_ascii_case("all") {
        return Ok(None);
    }
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s {
            "overall" => Ok(TestKind::Overall),
            "per-strain" => Ok(TestKind::PerStrain),
            "sieve" => Ok(TestKind::Sieve),
            other => Err(anyhow!("unknown test `{other}` (expected overall, per-strain, sieve)")),
        })
        .collect::<anyhow::Result<Vec<_>>>()
        .map(Some)
}

fn default_covariates(path: &Path, schema: &Schema) -> anyhow::Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let used: Vec<&str> = [
        Some(schema.time.as_str()),
        Some(schema.event.as_str()),
        Some(schema.complete.as_str()),
        Some(schema.cause.as_str()),
        schema.stratum.as_deref(),
        schema.aux.as_deref(),
    ]
    .into_iter()
    .flatten()
    .collect();
    Ok(rdr
        .headers()?
        .iter()
        .map(str::trim)
        .filter(|h| !used.contains(h))
        .map(String::from)
        .collect())
}

fn scope(cfg: &RunConfig) -> anyhow::Result<ModelScope> {
    match cfg.scope.as_deref().unwrap_or("per-stratum") {
        "per-stratum" => Ok(ModelScope::PerStratum),
        "pooled" => Ok(ModelScope::Pooled),
        other => bail!("unknown scope `{other}` (expected per-stratum or pooled)"),
    }
}

fn ipw_weight(cfg: &RunConfig) -> anyhow::Result<IpwResidualWeight> {
    match cfg.ipw_weight.as_deref().unwrap_or("inverse") {
        "inverse" => Ok(IpwResidualWeight::Inverse),
        "inverse-square" => Ok(IpwResidualWeight::InverseSquare),
        other => bail!("unknown ipw_weight `{other}` (expected inverse or inverse-square)"),
    }
}

fn structural_from(cfg: &RunConfig, ds: &AnalysisDataset) -> anyhow::Result<Option<StructuralCause>> {
    let Some(label) = cfg.structural_cause.as_deref() else {
        return Ok(None);
    };
    let threshold = cfg
        .aux_threshold
        .ok_or_else(|| anyhow!("structural_cause needs aux_threshold"))?;
    let cause = ds
        .cause_labels()
        .iter()
        .position(|l| l == label)
        .map(|i| i + 1)
        .ok_or_else(|| anyhow!("structural cause `{label}` is not a cause label of the dataset"))?;
    Ok(Some(StructuralCause {
        cause,
        aux_threshold: threshold,
    }))
}

fn finish(
    cfg: &RunConfig,
    ds: AnalysisDataset,
    schema: Schema,
    structural: Option<StructuralCause>,
    (default_completeness, default_cause): (&str, &str),
    generated: bool,
    source: Value,
) -> anyhow::Result<Input> {
    let completeness = cfg.completeness_features.as_deref().unwrap_or(default_completeness);
    let cause = cfg.cause_features.as_deref().unwrap_or(default_cause);
    let sc = scope(cfg)?;
    let mut options = AnalysisOptions::new(FeatureSpec::parse(completeness), FeatureSpec::parse(cause))
        .with_structural(structural)
        .with_scope(sc, sc);
    options.ipw_weight = ipw_weight(cfg)?;
    Ok(Input {
        ds,
        schema,
        structural,
        options,
        generated,
        source,
    })
}

/// Either a preset name or a scenario file for the simulation design.
pub fn scenario(cfg: &RunConfig) -> anyhow::Result<ScenarioConfig> {
    let name = cfg
        .scenario
        .as_deref()
        .ok_or_else(|| anyhow!("no scenario given (use --scenario)"))?;
    let mut sc = if Path::new(name).is_file() {
        let text = std::fs::read_to_string(name).with_context(|| format!("reading scenario {name}"))?;
        toml::from_str::<ScenarioConfig>(&text).with_context(|| format!("parsing scenario {name}"))?
    } else {
        ScenarioConfig::parse_preset(name)?
    };
    if let Some(seed) = cfg.seed {
        sc.seed = seed;
    }
    if let Some(reps) = cfg.reps {
        sc.n_reps = reps;
    }
    sc.validate()?;
    Ok(sc)
}

pub fn load(cfg: &RunConfig) -> anyhow::Result<Input> {
    if let Some(path) = &cfg.data {
        let mut schema = Schema::default();
        macro_rules! set {
            ($f:ident) => {
                if let Some(v) = &cfg.$f {
                    schema.$f = v.clone();
                }
            };
        }
        set!(time);
        set!(event);
        set!(complete);
        set!(cause);
        if let Some(s) = &cfg.stratum {
            schema.stratum = (!s.is_empty()).then(|| s.clone());
        }
        schema.aux = cfg.aux.clone();
        schema.tau = cfg.tau;
        schema.covariates = match &cfg.covariates {
            Some(list) => list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
            None => default_covariates(path, &schema)?,
        };
        if schema.covariates.is_empty() {
            bail!("no covariate columns in {}", path.display());
        }
        let ds = load_dataset(path, &schema)?;
        let structural = structural_from(cfg, &ds)?;
        let first = schema.covariates[0].clone();
        let default = if schema.aux.is_some() { format!("{first},a") } else { first };
        let source = json!({ "data": path });
        return finish(cfg, ds, schema, structural, (&default, &default), false, source);
    }
    let name = cfg
        .scenario
        .as_deref()
        .ok_or_else(|| anyhow!("no input given (use --data or --scenario)"))?;
    if let Some(coding) = match name {
        "pseudo" => Some(CauseCoding::ThreeCause),
        "pseudo-hamming" => Some(CauseCoding::Hamming),
        _ => None,
    } {
        let mut pc = PseudoTrialConfig {
            coding,
            ..PseudoTrialConfig::default()
        };
        if let Some(seed) = cfg.seed {
            pc.seed = seed;
        }
        let ds = generate_pseudo_trial(&pc)?;
        let schema = Schema::default()
            .with_covariates(ds.covariate_names().to_vec())
            .with_aux("vl");
        let structural = match cfg.structural_cause {
            Some(_) => structural_from(cfg, &ds)?,
            None => Some(pc.structural()),
        };
        let source = json!({ "pseudo_trial": pc });
        return finish(cfg, ds, schema, structural, ("trt,a", "t,trt,a"), true, source);
    }
    let sc = scenario(cfg)?;
    let ds = generate_trial(&sc, 0)?;
    let schema = Schema::default()
        .with_covariates(ds.covariate_names().to_vec())
        .with_aux("a");
    let source = json!({ "scenario": sc, "replicate": 0 });
    finish(cfg, ds, schema, None, ("z1,a", "z1,a"), true, source)
}
