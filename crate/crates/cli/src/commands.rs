use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use strainve_core::data::{validate, validate_with_fit, write_dataset, ValidationOptions, ValidationReport};
use strainve_core::inference::{McSettings, TestKind};
use strainve_core::pipeline::{fit_with_variance, method_report, tested_causes, NuisanceFits, ReportOptions};
use strainve_core::report::{baseline_table, coefficient_table, study_tables, test_table, ve_table, vd_table, MethodReport, Table};
use strainve_core::simulation::{run_study, StudyConfig, StudySummary, GENERATOR_NAME};

use crate::config::RunConfig;
use crate::input::{self, Input};

/// A failure of the numerics rather than of the inputs.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

const RESULTS: &str = "results.json";
const STUDY: &str = "study.json";
const MANIFEST: &str = "manifest.json";

/// Results of `fit` and `test`, also the input of `report`.
#[derive(Debug, Serialize, Deserialize)]
pub struct AnalysisResults {
    pub command: String,
    pub validation: ValidationReport,
    pub reports: Vec<MethodReport>,
}

fn prepare_out(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_tables(dir: &Path, tables: &[Table], files: &mut Vec<String>) -> anyhow::Result<()> {
    for t in tables {
        t.write(dir)?;
        files.push(format!("{}.csv", t.name));
        files.push(format!("{}.txt", t.name));
    }
    Ok(())
}

fn manifest(command: &str, cfg: &RunConfig, extra: Value, files: &[String]) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "generator": GENERATOR_NAME,
        "details": extra,
        "outputs": files,
    })
}

fn validation_text(v: &ValidationReport) -> String {
    let mut s = String::new();
    for e in &v.errors {
        s.push_str(&format!("error: {e}\n"));
    }
    for w in &v.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    if let Some(p) = v.min_fitted_prob {
        s.push_str(&format!("minimum fitted completeness probability: {p:.6}\n"));
    }
    if s.is_empty() {
        s.push_str("no issues\n");
    }
    s
}

fn analysis_tables(reports: &[MethodReport]) -> Vec<Table> {
    let mut tables = vec![coefficient_table(reports), ve_table(reports), vd_table(reports)];
    if reports.iter().any(|r| !r.tests.is_empty()) {
        tables.push(test_table(reports));
    }
    tables
}

/// Shared body of `fit` and `test`.
fn analyse(command: &str, cfg: &RunConfig, tests: Vec<TestKind>) -> anyhow::Result<()> {
    let level = cfg.level()?;
    let methods = input::methods(cfg)?;
    let Input {
        ds,
        schema,
        structural,
        options,
        generated,
        source,
    } = input::load(cfg)?;
    let dir = cfg.out_dir();
    prepare_out(&dir)?;
    let mut files = Vec::new();

    let mut validation = validate(&ds);
    if !validation.is_ok() {
        std::fs::write(dir.join("validation.txt"), validation_text(&validation))?;
        bail!("dataset failed validation: {}", validation.errors.join("; "));
    }
    if generated {
        write_dataset(&ds, dir.join("data.csv"), &schema)?;
        files.push("data.csv".into());
    }

    let mc = McSettings {
        draws: if tests.is_empty() { cfg.draws.unwrap_or(100_000) } else { cfg.draws()? },
        seed: cfg.seed.unwrap_or(McSettings::default().seed),
        level: 1.0 - level,
    };
    let ropts = ReportOptions {
        level,
        ve0: cfg.ve0.unwrap_or(0.0),
        tests,
        mc,
        pairs: None,
    };

    let nuisance = NuisanceFits::fit(&ds, &methods, &options)?;
    if let Some(cm) = &nuisance.completeness {
        validation = validate_with_fit(&ds, cm, ValidationOptions::default());
    }
    for w in &validation.warnings {
        warn!("{w}");
    }
    std::fs::write(dir.join("validation.txt"), validation_text(&validation))?;
    files.push("validation.txt".into());

    let mut reports = Vec::new();
    let mut baselines = Vec::new();
    for &m in &methods {
        info!("fitting {m}");
        let fit = fit_with_variance(&ds, m, &nuisance, options.ipw_weight)?;
        if !fit.converged() {
            let bad: Vec<String> = fit
                .diagnostics
                .iter()
                .filter(|d| !d.converged)
                .map(|d| format!("cause {} (score norm {:.3e})", d.cause, d.score_norm))
                .collect();
            return Err(NumericalFailure(format!("{m} did not converge for {}", bad.join(", "))).into());
        }
        reports.push(method_report(&fit, structural, &ropts)?);
        baselines.push(baseline_table(&fit));
    }

    write_tables(&dir, &analysis_tables(&reports), &mut files)?;
    write_tables(&dir, &baselines, &mut files)?;
    let results = AnalysisResults {
        command: command.into(),
        validation,
        reports,
    };
    write_json(dir.join(RESULTS), &results)?;
    files.push(RESULTS.into());
    let extra = json!({
        "source": source,
        "n": ds.n(),
        "causes": ds.cause_labels(),
        "covariates": ds.covariate_names(),
        "structural": structural,
        "options": options,
        "mc": (!ropts.tests.is_empty()).then_some(ropts.mc),
    });
    files.push(MANIFEST.into());
    write_json(dir.join(MANIFEST), &manifest(command, cfg, extra, &files))?;
    println!("{}", results.reports.iter().map(ve_line).collect::<Vec<_>>().join("\n"));
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn ve_line(r: &MethodReport) -> String {
    let parts: Vec<String> = r
        .ve
        .iter()
        .map(|v| format!("VE_{} = {:.3} ({:.3}, {:.3})", v.label, v.ve, v.ci_log.0, v.ci_log.1))
        .collect();
    format!("{:<5} {}", r.method.label(), parts.join("  "))
}

pub fn fit(cfg: &RunConfig) -> anyhow::Result<()> {
    let tests = input::tests(cfg)?.unwrap_or_default();
    analyse("fit", cfg, tests)
}

pub fn test(cfg: &RunConfig) -> anyhow::Result<()> {
    let tests = match input::tests(cfg)? {
        Some(t) => t,
        None => {
            // Probe the cause count so the sieve tests are only added when
            // they apply.
            let probe = input::load(cfg)?;
            let mut t = vec![TestKind::Overall, TestKind::PerStrain];
            if tested_causes(probe.ds.n_causes(), probe.structural).len() >= 2 {
                t.push(TestKind::Sieve);
            }
            t
        }
    };
    analyse("test", cfg, tests)
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<()> {
    let level = cfg.level()?;
    let scenario = input::scenario(cfg)?;
    let tests = input::tests(cfg)?.unwrap_or_else(|| {
        let mut t = vec![TestKind::Overall, TestKind::PerStrain];
        if scenario.n_causes() >= 2 {
            t.push(TestKind::Sieve);
        }
        t
    });
    let draws = if tests.is_empty() { 20_000 } else { cfg.draws.map_or(Ok(20_000), |_| cfg.draws())? };
    let mut study = StudyConfig::new(scenario)
        .with_methods(&input::methods(cfg)?)
        .with_tests(&tests);
    study.level = level;
    study.ve0 = cfg.ve0.unwrap_or(0.3);
    study.mc = McSettings {
        draws,
        seed: study.scenario.seed.wrapping_add(1),
        level: 1.0 - level,
    };
    if let Some(f) = &cfg.completeness_features {
        study.completeness_features = f.clone();
    }
    if let Some(f) = &cfg.cause_features {
        study.cause_features = f.clone();
    }
    if cfg.ipw_weight.is_some() {
        study.ipw_weight = match cfg.ipw_weight.as_deref() {
            Some("inverse-square") => strainve_core::variance::IpwResidualWeight::InverseSquare,
            Some("inverse") => strainve_core::variance::IpwResidualWeight::Inverse,
            Some(other) => bail!("unknown ipw_weight `{other}`"),
            None => unreachable!(),
        };
    }
    let dir = cfg.out_dir();
    prepare_out(&dir)?;
    info!("running {} replicates of {}", study.scenario.n_reps, study.scenario.name);
    let summary = run_study(&study)?;
    let mut files = Vec::new();
    write_tables(&dir, &study_tables(&summary), &mut files)?;
    write_json(dir.join(STUDY), &summary)?;
    files.push(STUDY.into());
    let extra = json!({
        "study": study,
        "censor_rate": summary.censor_rate,
        "mean_censored_fraction": summary.mean_censored_fraction,
        "failures": summary.failures.len(),
        "warnings": summary.warnings,
    });
    files.push(MANIFEST.into());
    write_json(dir.join(MANIFEST), &manifest("simulate", cfg, extra, &files))?;
    for w in &summary.warnings {
        warn!("{w}");
    }
    print!("{}", study_tables(&summary).iter().map(Table::to_text).collect::<Vec<_>>().join("\n"));
    println!("wrote {} files to {}", files.len(), dir.display());
    if !summary.within_failure_budget() {
        return Err(NumericalFailure(format!(
            "{} replicate fits failed, more than {:.0}% for at least one method",
            summary.failures.len(),
            100.0 * summary.max_failure_frac
        ))
        .into());
    }
    Ok(())
}

/// Re-renders the tables of an output directory from its JSON results.
pub fn report(cfg: &RunConfig) -> anyhow::Result<()> {
    let dir = cfg.out_dir();
    let mut files = Vec::new();
    let results = dir.join(RESULTS);
    let study = dir.join(STUDY);
    if results.is_file() {
        let text = std::fs::read_to_string(&results)?;
        let r: AnalysisResults = serde_json::from_str(&text).with_context(|| format!("parsing {}", results.display()))?;
        let tables = analysis_tables(&r.reports);
        write_tables(&dir, &tables, &mut files)?;
        print!("{}", tables.iter().map(Table::to_text).collect::<Vec<_>>().join("\n"));
    }
    if study.is_file() {
        let text = std::fs::read_to_string(&study)?;
        let s: StudySummary = serde_json::from_str(&text).with_context(|| format!("parsing {}", study.display()))?;
        let tables = study_tables(&s);
        write_tables(&dir, &tables, &mut files)?;
        print!("{}", tables.iter().map(Table::to_text).collect::<Vec<_>>().join("\n"));
    }
    if files.is_empty() {
        bail!("no {RESULTS} or {STUDY} in {}", dir.display());
    }
    Ok(())
}
