use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the crate.
///
/// Variants are split between input problems (bad files, bad configuration,
/// unidentified models) and numerical failures; [`Error::is_input_error`]
/// tells them apart so front ends can map them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("complete separation in stratum {stratum} on feature `{feature}`")]
    Separation { stratum: String, feature: String },

    #[error("cause {cause} unidentified in stratum {stratum}: {reason}")]
    Unidentified {
        cause: usize,
        stratum: String,
        reason: String,
    },

    #[error("singular derivative for cause {cause}{}", stratum_suffix(.stratum))]
    Singular { cause: usize, stratum: Option<usize> },

    #[error("{what} did not converge in {iterations} iterations (trace: {trace})")]
    NoConvergence {
        what: String,
        iterations: usize,
        trace: String,
    },

    #[error("zero risk-set denominator at time {time} (stratum {stratum}, cause {cause})")]
    EmptyRiskSet {
        time: f64,
        stratum: usize,
        cause: usize,
    },

    #[error("no draws requested")]
    NoDraws,

    #[error("covariance repair of {repair:.3e} exceeds the allowed {allowed:.3e}")]
    PsdRepair { repair: f64, allowed: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unattainable censoring target {target}: achievable range is [{min:.4}, {max:.4})")]
    CensoringTarget { target: f64, min: f64, max: f64 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn stratum_suffix(stratum: &Option<usize>) -> String {
    match stratum {
        Some(k) => format!(" (stratum {k})"),
        None => String::new(),
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the inputs rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Csv(_)
                | Error::Row { .. }
                | Error::MissingColumn(_)
                | Error::Invalid(_)
                | Error::Config(_)
                | Error::Unidentified { .. }
                | Error::Separation { .. }
                | Error::CensoringTarget { .. }
                | Error::NoDraws
                | Error::Json(_)
        )
    }
}
