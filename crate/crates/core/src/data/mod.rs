//! Analysis dataset: subject records, delimited-file ingestion, and
//! validation guards.
//!
//! Causes and strata are stored as contiguous 1-based labels. Original file
//! labels are kept alongside so reports can print them back.

mod io;
mod validate;

pub use io::{load_dataset, write_dataset, Schema};
pub use validate::{validate, validate_with_fit, ValidationOptions, ValidationReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trial participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    /// Follow-up time, the minimum of failure and censoring times.
    pub time: f64,
    /// Failure indicator.
    pub event: bool,
    /// Completeness indicator. Censored records are complete.
    pub complete: bool,
    /// Cause label in `1..=J`, absent when censored or incomplete.
    pub cause: Option<usize>,
    /// Baseline covariates; entry 0 is the treatment indicator.
    pub covariates: Vec<f64>,
    /// Auxiliary mark (normally present only for failures).
    pub aux: Option<f64>,
    /// Stratum label in `1..=K`.
    pub stratum: usize,
}

impl SubjectRecord {
    /// Whether this record is a failure with observed cause `j`.
    #[inline]
    pub fn has_cause(&self, j: usize) -> bool {
        self.event && self.complete && self.cause == Some(j)
    }
}

/// A cause that is a deterministic function of the auxiliary mark: failures
/// whose mark falls below `aux_threshold` are assigned `cause` and are
/// complete by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralCause {
    pub cause: usize,
    pub aux_threshold: f64,
}

impl StructuralCause {
    #[inline]
    pub fn applies(&self, rec: &SubjectRecord) -> bool {
        rec.event && rec.aux.is_some_and(|a| a < self.aux_threshold)
    }
}

/// Read-only collection of subject records plus the dimensions of the
/// stratified competing-risks model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisDataset {
    records: Vec<SubjectRecord>,
    tau: f64,
    n_causes: usize,
    n_strata: usize,
    covariate_names: Vec<String>,
    cause_labels: Vec<String>,
    stratum_labels: Vec<String>,
}

impl AnalysisDataset {
    /// Builds a dataset and checks every record invariant.
    ///
    /// `tau` defaults to the largest observed time.
    pub fn new(
        records: Vec<SubjectRecord>,
        covariate_names: Vec<String>,
        n_causes: usize,
        n_strata: usize,
        tau: Option<f64>,
    ) -> Result<Self> {
        let cause_labels = (1..=n_causes).map(|j| j.to_string()).collect();
        let stratum_labels = (1..=n_strata).map(|k| k.to_string()).collect();
        Self::with_labels(records, covariate_names, cause_labels, stratum_labels, tau)
    }

    pub fn with_labels(
        records: Vec<SubjectRecord>,
        covariate_names: Vec<String>,
        cause_labels: Vec<String>,
        stratum_labels: Vec<String>,
        tau: Option<f64>,
    ) -> Result<Self> {
        let n_causes = cause_labels.len();
        let n_strata = stratum_labels.len();
        if n_causes == 0 {
            return Err(Error::Invalid("at least one cause is required".into()));
        }
        if n_strata == 0 {
            return Err(Error::Invalid("at least one stratum is required".into()));
        }
        if records.is_empty() {
            return Err(Error::Invalid("dataset has no records".into()));
        }
        let max_time = records.iter().map(|r| r.time).fold(0.0_f64, f64::max);
        let tau = tau.unwrap_or(max_time);
        let p = covariate_names.len();
        for (i, rec) in records.iter().enumerate() {
            check_record(rec, p, n_causes, n_strata, tau).map_err(|message| Error::Row {
                row: i + 1,
                message,
            })?;
        }
        Ok(Self {
            records,
            tau,
            n_causes,
            n_strata,
            covariate_names,
            cause_labels,
            stratum_labels,
        })
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n_causes(&self) -> usize {
        self.n_causes
    }

    pub fn n_strata(&self) -> usize {
        self.n_strata
    }

    /// Covariate dimension `p`.
    pub fn p(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn cause_labels(&self) -> &[String] {
        &self.cause_labels
    }

    pub fn stratum_labels(&self) -> &[String] {
        &self.stratum_labels
    }

    /// Record indices grouped by stratum (index `k-1` holds stratum `k`),
    /// in file order.
    pub fn strata_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_strata];
        for (i, r) in self.records.iter().enumerate() {
            out[r.stratum - 1].push(i);
        }
        out
    }

    /// Stratum sizes `n_k`.
    pub fn stratum_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_strata];
        for r in &self.records {
            out[r.stratum - 1] += 1;
        }
        out
    }

    /// Returns a copy with the records replaced; dimensions and labels are
    /// kept and the invariants re-checked.
    pub fn with_records(&self, records: Vec<SubjectRecord>) -> Result<Self> {
        Self::with_labels(
            records,
            self.covariate_names.clone(),
            self.cause_labels.clone(),
            self.stratum_labels.clone(),
            Some(self.tau),
        )
    }
}

fn check_record(
    rec: &SubjectRecord,
    p: usize,
    n_causes: usize,
    n_strata: usize,
    tau: f64,
) -> std::result::Result<(), String> {
    if !rec.time.is_finite() || rec.time < 0.0 {
        return Err(format!("negative or non-finite time {}", rec.time));
    }
    if rec.time > tau {
        return Err(format!("time {} exceeds the study horizon {tau}", rec.time));
    }
    if !rec.event && !rec.complete {
        return Err("censored record marked incomplete".into());
    }
    if rec.event && rec.complete && rec.cause.is_none() {
        return Err("complete failure without a cause".into());
    }
    if !rec.complete && rec.cause.is_some() {
        return Err("incomplete record carries a cause".into());
    }
    if !rec.event && rec.cause.is_some() {
        return Err("censored record carries a cause".into());
    }
    if let Some(v) = rec.cause {
        if v == 0 || v > n_causes {
            return Err(format!("cause {v} outside 1..={n_causes}"));
        }
    }
    if rec.stratum == 0 || rec.stratum > n_strata {
        return Err(format!("stratum {} outside 1..={n_strata}", rec.stratum));
    }
    if rec.covariates.len() != p {
        return Err(format!(
            "expected {p} covariates, found {}",
            rec.covariates.len()
        ));
    }
    if rec.covariates.iter().any(|z| !z.is_finite()) {
        return Err("non-finite covariate".into());
    }
    Ok(())
}
