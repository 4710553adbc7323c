//! Vaccine-efficacy estimates, intervals, and Monte-Carlo hypothesis tests.

pub(crate) mod efficacy;
mod hypothesis;
mod mc;
mod multiplicity;

pub use efficacy::{all_pairs, efficacy_report, ve_estimate, vd_estimate, CiForm, EfficacyReport, VdEstimate, VeEstimate};
pub use hypothesis::{
    c0_of, overall_test, per_strain_test, sieve_test, test_overall, test_per_strain, test_sieve, AlphaEstimates,
    McSettings, Tail, TestKind, TestReport, TestResult,
};
pub use mc::{mc_reference, McReference, BLOCK, MAX_REPAIR_FRAC, MAX_RIDGE_FRAC};
pub use multiplicity::{bonferroni, step_down_sidak};
