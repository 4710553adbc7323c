//! Simulated trials, pseudo-trials, and replication studies.

mod generator;
mod pseudo;
mod scenario;
mod study;

pub use generator::{
    generate_trial, invert_cumulative_hazard, latent_sample, tune_censoring_rate, LatentSubject, TrialGenerator,
    GENERATOR_NAME,
};
pub use pseudo::{generate_pseudo_trial, CauseCoding, PseudoTrialConfig, PSEUDO_COVARIATES};
pub use scenario::{AuxLevel, ScenarioConfig, Setting};
pub use study::{run_study, ParamSummary, ReplicateFailure, StudyConfig, StudySummary, TestSummary};

/// A small M3/Aux2 replicate for unit tests elsewhere in the crate.
#[cfg(test)]
pub(crate) fn test_trial(n: usize, rep: u64) -> crate::AnalysisDataset {
    let mut cfg = ScenarioConfig::parse_preset("M3-Aux2").unwrap();
    cfg.n = n;
    cfg.tuning_sample = 20_000;
    generate_trial(&cfg, rep).unwrap()
}
