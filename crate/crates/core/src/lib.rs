//! Stratified cause-specific proportional hazards with a missing-at-random
//! failure cause: complete-case, IPW, and AIPW estimation, sandwich
//! variances, strain-specific vaccine-efficacy inference, and a simulation
//! harness.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod inference;
pub mod estimation;
pub mod linalg;
pub mod missingness;
pub mod pipeline;
pub mod report;
pub mod simulation;
pub mod variance;

pub use data::{AnalysisDataset, StructuralCause, SubjectRecord};
pub use error::{Error, Result};
