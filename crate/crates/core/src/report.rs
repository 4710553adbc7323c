//! Result records and the tables rendered from them.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimation::{CauseDiagnostics, Method, ModelFit};
use crate::inference::{TestKind, TestReport, VdEstimate, VeEstimate};
use crate::simulation::StudySummary;

/// One regression coefficient with a two-sided Wald p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub cause: usize,
    pub cause_label: String,
    pub covariate: String,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
}

pub fn coefficients(fit: &ModelFit) -> Result<Vec<Coefficient>> {
    let se = fit
        .standard_errors()
        .ok_or_else(|| Error::Invalid("fit has no covariance estimate".into()))?;
    let normal = Normal::standard();
    let p = fit.p();
    let mut out = Vec::with_capacity(fit.n_causes() * p);
    for j in 1..=fit.n_causes() {
        for (c, name) in fit.covariate_names.iter().enumerate() {
            let est = fit.beta[j - 1][c];
            let s = se[(j - 1) * p + c];
            let p_value = if s > 0.0 { 2.0 * normal.cdf(-(est / s).abs()) } else { f64::NAN };
            out.push(Coefficient {
                cause: j,
                cause_label: fit.cause_labels[j - 1].clone(),
                covariate: name.clone(),
                estimate: est,
                se: s,
                p_value,
            });
        }
    }
    Ok(out)
}

/// Everything reported for one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub n: usize,
    pub level: f64,
    pub coefficients: Vec<Coefficient>,
    pub ve: Vec<VeEstimate>,
    pub vd: Vec<VdEstimate>,
    pub tests: Vec<TestReport>,
    pub seed: Option<u64>,
    #[serde(rename = "B")]
    pub draws: Option<usize>,
    pub diagnostics: Vec<CauseDiagnostics>,
    pub warnings: Vec<String>,
}

impl MethodReport {
    pub fn test(&self, kind: TestKind) -> Option<&TestReport> {
        self.tests.iter().find(|t| t.kind == kind)
    }
}

/// A rectangular table with a CSV form and an aligned text form.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, title: &str, header: Vec<String>) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numerical(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let ncol = self.header.len();
        let mut width = vec![0usize; ncol];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (c, cell) in r.iter().enumerate().take(ncol) {
                width[c] = width[c].max(cell.chars().count());
            }
        }
        let line = |r: &[String]| {
            let mut s = String::new();
            for (c, cell) in r.iter().enumerate() {
                if c == 0 {
                    let _ = write!(s, "{cell:<w$}", w = width[c]);
                } else {
                    let _ = write!(s, "  {cell:>w$}", w = width[c]);
                }
            }
            s.trim_end().to_string()
        };
        let total: usize = width.iter().sum::<usize>() + 2 * ncol.saturating_sub(1);
        let mut out = format!("{}\n{}\n", self.title, "=".repeat(total));
        out.push_str(&line(&self.header));
        out.push('\n');
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    /// Writes `<name>.csv` and `<name>.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let csv_path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(csv_path, e))?;
        let txt_path = dir.join(format!("{}.txt", self.name));
        std::fs::write(&txt_path, self.to_text()).map_err(|e| Error::io(txt_path, e))
    }
}

fn num(x: f64, digits: usize) -> String {
    if x.is_finite() {
        format!("{x:.digits$}")
    } else {
        "NA".into()
    }
}

fn pval(p: f64) -> String {
    if p.is_finite() && p < 0.001 {
        "<0.001".into()
    } else {
        num(p, 3)
    }
}

/// Covariate effects per cause with one `Est. SE p-value` block per method.
pub fn coefficient_table(reports: &[MethodReport]) -> Table {
    let mut header = vec!["cause".to_string(), "covariate".to_string()];
    for r in reports {
        let m = r.method.label();
        header.extend([format!("{m} Est."), format!("{m} SE"), format!("{m} p-value")]);
    }
    let mut t = Table::new("coefficients", "Estimated covariate effects", header);
    if let Some(first) = reports.first() {
        for (row, c) in first.coefficients.iter().enumerate() {
            let mut cells = vec![c.cause_label.clone(), c.covariate.clone()];
            for r in reports {
                match r.coefficients.get(row) {
                    Some(x) => cells.extend([num(x.estimate, 3), num(x.se, 3), pval(x.p_value)]),
                    None => cells.extend(["NA".into(), "NA".into(), "NA".into()]),
                }
            }
            t.rows.push(cells);
        }
    }
    t
}

/// Strain-specific efficacies with their per-strain tests when available.
pub fn ve_table(reports: &[MethodReport]) -> Table {
    let level = reports.first().map_or(0.95, |r| r.level);
    let pct = format!("{:.0}%", 100.0 * level);
    let header = [
        "method",
        "parameter",
        "Est.",
        "SE",
        &format!("{pct} LL"),
        &format!("{pct} UL"),
        "U1j",
        "U1j p-value",
        "U2j",
        "U2j p-value",
    ]
    .map(String::from)
    .to_vec();
    let mut t = Table::new("ve", "Strain-specific vaccine efficacy", header);
    for r in reports {
        let per = r.test(TestKind::PerStrain);
        for v in &r.ve {
            let stat = |prefix: &str| -> [String; 2] {
                per.and_then(|p| p.get(&format!("{prefix}[{}]", v.cause)))
                    .map_or(["".into(), "".into()], |x| {
                        [num(x.value, 3), pval(x.p_adjusted.unwrap_or(x.p_value))]
                    })
            };
            let [u1, p1] = stat("U1");
            let [u2, p2] = stat("U2");
            t.rows.push(vec![
                r.method.label().into(),
                format!("VE_{}", v.label),
                num(v.ve, 3),
                num(v.se_ve, 3),
                num(v.ci_log.0, 3),
                num(v.ci_log.1, 3),
                u1,
                p1,
                u2,
                p2,
            ]);
        }
    }
    t
}

pub fn vd_table(reports: &[MethodReport]) -> Table {
    let level = reports.first().map_or(0.95, |r| r.level);
    let pct = format!("{:.0}%", 100.0 * level);
    let header = ["method", "parameter", "Est.", "SE", &format!("{pct} LL"), &format!("{pct} UL")]
        .map(String::from)
        .to_vec();
    let mut t = Table::new("vd", "Differential vaccine efficacy", header);
    for r in reports {
        for d in &r.vd {
            t.rows.push(vec![
                r.method.label().into(),
                format!("VD({},{})", d.i, d.j),
                num(d.vd, 3),
                num(d.se, 3),
                num(d.ci.0, 3),
                num(d.ci.1, 3),
            ]);
        }
    }
    t
}

/// One row per method with the overall and sieve statistics.
pub fn test_table(reports: &[MethodReport]) -> Table {
    let header = ["method", "U1", "U1 p-value", "U2", "U2 p-value", "T1", "T1 p-value", "T2", "T2 p-value"]
        .map(String::from)
        .to_vec();
    let mut t = Table::new("tests", "Hypothesis tests", header);
    for r in reports {
        let mut row = vec![r.method.label().to_string()];
        for (kind, name) in [
            (TestKind::Overall, "U1"),
            (TestKind::Overall, "U2"),
            (TestKind::Sieve, "T1"),
            (TestKind::Sieve, "T2"),
        ] {
            match r.test(kind).and_then(|x| x.get(name)) {
                Some(x) => row.extend([num(x.value, 3), pval(x.p_value)]),
                None => row.extend([String::new(), String::new()]),
            }
        }
        t.rows.push(row);
    }
    t
}

/// Cumulative baseline hazards of a fit in long form.
pub fn baseline_table(fit: &ModelFit) -> Table {
    let header = ["stratum", "cause", "time", "jump", "cumulative"].map(String::from).to_vec();
    let mut t = Table::new(
        &format!("baseline_{}", fit.method.label().to_lowercase()),
        "Cumulative baseline hazards",
        header,
    );
    for (k, per_cause) in fit.baselines.iter().enumerate() {
        for (j, sf) in per_cause.iter().enumerate() {
            for ((time, jump), cum) in sf.times.iter().zip(&sf.jumps).zip(sf.cumulative()) {
                t.rows.push(vec![
                    (k + 1).to_string(),
                    fit.cause_labels[j].clone(),
                    format!("{time:.6}"),
                    format!("{jump:.6e}"),
                    format!("{cum:.6e}"),
                ]);
            }
        }
    }
    t
}

/// Bias, SSE, ESE and CP of `params`, one row per method.
pub fn estimator_table(summary: &StudySummary, name: &str, params: &[&str]) -> Table {
    let mut header = vec!["setting".to_string(), "method".to_string()];
    for p in params {
        header.extend(["bias", "SSE", "ESE", "CP"].map(|s| format!("{p} {s}")));
    }
    let mut t = Table::new(name, &format!("Estimator summary over {} replicates", summary.n_reps), header);
    let mut methods: Vec<Method> = summary.params.iter().map(|p| p.method).collect();
    methods.dedup();
    for m in methods {
        let mut row = vec![summary.scenario.clone(), m.label().to_string()];
        for p in params {
            match summary.param(m, p) {
                Some(s) => row.extend([num(s.bias, 4), s.sse.map_or("NA".into(), |v| num(v, 4)), num(s.ese, 4), num(s.cp, 3)]),
                None => row.extend(["NA".into(), "NA".into(), "NA".into(), "NA".into()]),
            }
        }
        t.rows.push(row);
    }
    t
}

/// Empirical rejection rates, one column per method and test.
pub fn rejection_table(summary: &StudySummary, name: &str, tests: &[&str]) -> Table {
    let mut methods: Vec<Method> = summary.tests.iter().map(|t| t.method).collect();
    methods.dedup();
    let mut header = vec!["setting".to_string()];
    for m in &methods {
        header.extend(tests.iter().map(|t| format!("{} {t}", m.label())));
    }
    let mut t = Table::new(name, &format!("Rejection rates over {} replicates", summary.n_reps), header);
    let mut row = vec![summary.scenario.clone()];
    for &m in &methods {
        row.extend(tests.iter().map(|name| summary.test(m, name).map_or("NA".into(), |s| num(s.rejection_rate, 3))));
    }
    t.rows.push(row);
    t
}

/// The estimator and rejection-rate tables produced by a study.
pub fn study_tables(summary: &StudySummary) -> Vec<Table> {
    let n_causes = summary
        .params
        .iter()
        .filter(|p| p.parameter.starts_with("alpha"))
        .map(|p| p.parameter.clone())
        .collect::<std::collections::BTreeSet<_>>();
    let alphas: Vec<&str> = n_causes.iter().map(String::as_str).collect();
    let mut effects: Vec<String> = n_causes.iter().map(|a| a.replace("alpha", "VE")).collect();
    if summary.params.iter().any(|p| p.parameter == "VD(2,1)") {
        effects.push("VD(2,1)".into());
    }
    let effects: Vec<&str> = effects.iter().map(String::as_str).collect();
    let mut out = vec![
        estimator_table(summary, "estimators_alpha", &alphas),
        estimator_table(summary, "estimators_ve", &effects),
    ];
    let present = |prefix: &str| {
        let mut names: Vec<String> = summary
            .tests
            .iter()
            .filter(|t| t.test.starts_with(prefix))
            .map(|t| t.test.clone())
            .collect();
        names.sort();
        names.dedup();
        names
    };
    for (name, group) in [
        ("tests_overall", vec!["U1".to_string(), "U2".to_string()]),
        ("tests_per_strain", [present("U1["), present("U2[")].concat()),
        ("tests_sieve", vec!["T1".to_string(), "T2".to_string()]),
    ] {
        let group: Vec<&str> = group
            .iter()
            .map(String::as_str)
            .filter(|g| summary.tests.iter().any(|t| t.test == *g))
            .collect();
        if !group.is_empty() {
            out.push(rejection_table(summary, name, &group));
        }
    }
    out
}
