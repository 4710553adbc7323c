use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

/// Options shared by every command. Each one may also be set in the config
/// file under the same name; flags win.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Input dataset (delimited text with a header row).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Simulation preset (`M3-Aux0`, `pseudo`, `pseudo-hamming`) or a scenario file.
    #[arg(long)]
    pub scenario: Option<String>,
    /// cc, ipw, aipw, a comma list of them, or all.
    #[arg(long)]
    pub method: Option<String>,
    /// Null efficacy for the U tests.
    #[arg(long)]
    pub ve0: Option<f64>,
    /// Monte-Carlo reference draws.
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Confidence level for intervals; tests use one minus it.
    #[arg(long)]
    pub level: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tests to run: overall, per-strain, sieve, or all.
    #[arg(long)]
    pub tests: Option<String>,
    /// Replicates for `simulate`.
    #[arg(long)]
    pub reps: Option<usize>,

    #[arg(long)]
    pub time: Option<String>,
    #[arg(long)]
    pub event: Option<String>,
    #[arg(long)]
    pub complete: Option<String>,
    #[arg(long)]
    pub cause: Option<String>,
    #[arg(long)]
    pub stratum: Option<String>,
    /// Comma-separated covariate columns; defaults to every unused column.
    #[arg(long)]
    pub covariates: Option<String>,
    /// Auxiliary mark column.
    #[arg(long)]
    pub aux: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,

    /// Completeness-model features, e.g. `trt,a`.
    #[arg(long)]
    pub completeness_features: Option<String>,
    /// Cause-model features, e.g. `t,trt,a`.
    #[arg(long)]
    pub cause_features: Option<String>,
    /// per-stratum or pooled nuisance models.
    #[arg(long)]
    pub scope: Option<String>,
    /// Cause label that is determined by the auxiliary mark.
    #[arg(long)]
    pub structural_cause: Option<String>,
    #[arg(long)]
    pub aux_threshold: Option<f64>,
    /// inverse or inverse-square weight in the IPW residual.
    #[arg(long)]
    pub ipw_weight: Option<String>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Values set in `top` replace those in `self`.
    pub fn merged(mut self, top: &RunConfig) -> Self {
        overlay!(
            self, top, data, scenario, method, ve0, draws, seed, level, out, tests, reps, time, event, complete,
            cause, stratum, covariates, aux, tau, completeness_features, cause_features, scope, structural_cause,
            aux_threshold, ipw_weight
        );
        self
    }

    pub fn level(&self) -> anyhow::Result<f64> {
        let level = self.level.unwrap_or(0.95);
        if !(level > 0.0 && level < 1.0) {
            bail!("level {level} outside (0, 1)");
        }
        Ok(level)
    }

    pub fn draws(&self) -> anyhow::Result<usize> {
        let b = self.draws.unwrap_or(100_000);
        if b < 1000 {
            bail!("B = {b} is too small; at least 1000 draws are required");
        }
        Ok(b)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("strainve-out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: RunConfig = toml::from_str("method = \"ipw\"\nB = 5000\nlevel = 0.9\n").unwrap();
        let flags = RunConfig {
            method: Some("aipw".into()),
            ..RunConfig::default()
        };
        let m = file.merged(&flags);
        assert_eq!(m.method.as_deref(), Some("aipw"));
        assert_eq!(m.draws, Some(5000));
        assert_eq!(m.level().unwrap(), 0.9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }

    #[test]
    fn small_b_is_rejected() {
        let c = RunConfig {
            draws: Some(10),
            ..RunConfig::default()
        };
        assert!(c.draws().is_err());
    }
}
