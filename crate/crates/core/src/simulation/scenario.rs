use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment-effect settings of the two-cause design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    M1,
    M2,
    M3,
    N1,
    N2,
    N3,
}

impl Setting {
    pub const ALL: [Setting; 6] = [Setting::M1, Setting::M2, Setting::M3, Setting::N1, Setting::N2, Setting::N3];

    /// `(VE_1, VE_2)`.
    pub fn efficacies(self) -> (f64, f64) {
        match self {
            Setting::M1 => (0.3, 0.3),
            Setting::M2 => (0.5, 0.3),
            Setting::M3 => (0.6, 0.3),
            Setting::N1 => (0.5, 0.5),
            Setting::N2 => (0.7, 0.5),
            Setting::N3 => (0.9, 0.5),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Setting::M1 => "M1",
            Setting::M2 => "M2",
            Setting::M3 => "M3",
            Setting::N1 => "N1",
            Setting::N2 => "N2",
            Setting::N3 => "N3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown setting `{s}`")))
    }
}

/// Association between the auxiliary mark and the cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuxLevel {
    Aux0,
    Aux1,
    Aux2,
}

impl AuxLevel {
    pub const ALL: [AuxLevel; 3] = [AuxLevel::Aux0, AuxLevel::Aux1, AuxLevel::Aux2];

    /// The mark is uniform on `(2a(V-1), 1 + 0.5 a V)`.
    pub fn a(self) -> f64 {
        match self {
            AuxLevel::Aux0 => 0.0,
            AuxLevel::Aux1 => 0.2,
            AuxLevel::Aux2 => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AuxLevel::Aux0 => "Aux0",
            AuxLevel::Aux1 => "Aux1",
            AuxLevel::Aux2 => "Aux2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown auxiliary level `{s}`")))
    }
}

/// Design of a simulated stratified competing-risks trial with hazards
/// `lambda_kj(t | z) = t^theta_kj exp(alpha_j z1 + gamma_j z2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub n: usize,
    /// `theta[k-1][j-1]`.
    pub theta: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Mark spread parameter `a`.
    pub aux_a: f64,
    /// Completeness mechanism `logit r = psi0 + psi1 z1 + psi2 A`.
    pub psi_true: Vec<f64>,
    /// Overall censored fraction, administrative censoring included.
    pub censor_target: f64,
    /// Exponential censoring rate; tuned to `censor_target` when absent.
    pub censor_rate: Option<f64>,
    pub tau: f64,
    /// Relative stratum sizes; equal when empty.
    pub strata_props: Vec<f64>,
    pub n_reps: usize,
    pub seed: u64,
    /// Pre-sample size used to tune the censoring rate.
    pub tuning_sample: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::preset(Setting::M3, AuxLevel::Aux0)
    }
}

impl ScenarioConfig {
    pub fn preset(setting: Setting, aux: AuxLevel) -> Self {
        let (ve1, ve2) = setting.efficacies();
        Self {
            name: format!("{}-{}", setting.name(), aux.name()),
            n: 1200,
            theta: vec![vec![0.2, 0.2], vec![0.5, 0.5], vec![1.0, 1.0]],
            alpha: vec![(1.0 - ve1).ln(), (1.0 - ve2).ln()],
            gamma: vec![1.0, 1.0],
            aux_a: aux.a(),
            psi_true: vec![1.5, -1.0, -0.5],
            censor_target: 0.4,
            censor_rate: None,
            tau: 1.0,
            strata_props: Vec::new(),
            n_reps: 200,
            seed: 20_240_601,
            tuning_sample: 200_000,
        }
    }

    /// Parses a preset name such as `M3-Aux2`.
    pub fn parse_preset(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(['-', '/', ':'])
            .ok_or_else(|| Error::Config(format!("scenario `{s}` must look like M3-Aux0")))?;
        Ok(Self::preset(Setting::parse(a)?, AuxLevel::parse(b)?))
    }

    pub fn n_strata(&self) -> usize {
        self.theta.len()
    }

    pub fn n_causes(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.alpha.is_empty() || self.gamma.len() != self.alpha.len() {
            return bad("alpha and gamma must be nonempty and of equal length".into());
        }
        if self.theta.is_empty() || self.theta.iter().any(|r| r.len() != self.alpha.len()) {
            return bad("theta needs one row per stratum with one entry per cause".into());
        }
        if self.theta.iter().flatten().any(|&t| !(t > -1.0)) {
            return bad("every theta must exceed -1".into());
        }
        if self.psi_true.len() != 3 {
            return bad("psi_true needs three entries (intercept, z1, mark)".into());
        }
        if !(self.censor_target > 0.0 && self.censor_target < 1.0) {
            return bad(format!("censoring target {} outside (0, 1)", self.censor_target));
        }
        if let Some(r) = self.censor_rate {
            if !(r >= 0.0) {
                return bad("censoring rate must be nonnegative".into());
            }
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive".into());
        }
        if !self.strata_props.is_empty()
            && (self.strata_props.len() != self.n_strata() || self.strata_props.iter().any(|&p| !(p > 0.0)))
        {
            return bad("strata_props needs one positive entry per stratum".into());
        }
        if self.tuning_sample < 1000 {
            return bad("tuning_sample must be at least 1000".into());
        }
        Ok(())
    }

    /// Stratum (1-based) of subject `i` out of `n` under the configured
    /// proportions.
    pub fn stratum_of(&self, i: usize, n: usize) -> usize {
        let k = self.n_strata();
        if self.strata_props.is_empty() {
            return i * k / n + 1;
        }
        let total: f64 = self.strata_props.iter().sum();
        let u = (i as f64 + 0.5) / n as f64;
        let mut acc = 0.0;
        for (s, p) in self.strata_props.iter().enumerate() {
            acc += p / total;
            if u < acc {
                return s + 1;
            }
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_and_equal_split() {
        let c = ScenarioConfig::parse_preset("M3-Aux2").unwrap();
        assert!((c.alpha[0] - 0.4f64.ln()).abs() < 1e-15);
        assert_eq!(c.aux_a, 0.5);
        let mut sizes = [0usize; 3];
        for i in 0..c.n {
            sizes[c.stratum_of(i, c.n) - 1] += 1;
        }
        assert_eq!(sizes, [400, 400, 400]);
    }

    #[test]
    fn toml_round_trip() {
        let c = ScenarioConfig::preset(Setting::N2, AuxLevel::Aux1);
        let s = toml::to_string(&c).unwrap();
        let back: ScenarioConfig = toml::from_str(&s).unwrap();
        assert_eq!(c, back);
    }
}
