//! Shared fixtures for the benchmarks.

use strainve_core::missingness::FeatureSpec;
use strainve_core::pipeline::AnalysisOptions;
use strainve_core::simulation::{generate_trial, ScenarioConfig};
use strainve_core::AnalysisDataset;

/// One replicate of the M3/Aux2 design with `n` subjects.
pub fn m3_dataset(n: usize) -> AnalysisDataset {
    let mut cfg = ScenarioConfig::parse_preset("M3-Aux2").expect("preset");
    cfg.n = n;
    generate_trial(&cfg, 0).expect("generate")
}

pub fn options() -> AnalysisOptions {
    AnalysisOptions::new(FeatureSpec::parse("z1,a"), FeatureSpec::parse("z1,a"))
}
