use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{AnalysisDataset, StructuralCause, SubjectRecord};
use crate::error::{Error, Result};

/// How genotypes and viral loads are turned into failure causes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CauseCoding {
    /// 1 matched, 2 mismatched (both with viral load at or above the
    /// threshold), 3 viral load below the threshold.
    #[default]
    ThreeCause,
    /// Hamming-distance classes {0}, {1-4}, {5-8}, {9+} above the threshold,
    /// 5 below it.
    Hamming,
}

/// Two-arm pseudo-trial with a viral-load mark and a genotype cause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoTrialConfig {
    pub n_vaccine: usize,
    pub n_placebo: usize,
    /// Expected endpoint counts per arm; event rates are calibrated to them.
    pub cases_vaccine: f64,
    pub cases_placebo: f64,
    pub mismatch_prob_vaccine: f64,
    pub mismatch_prob_placebo: f64,
    /// Hamming-class probabilities per arm (four classes).
    pub hamming_probs_vaccine: Vec<f64>,
    pub hamming_probs_placebo: Vec<f64>,
    /// Mean log viral load per arm and its standard deviation.
    pub vl_mean_vaccine: f64,
    pub vl_mean_placebo: f64,
    pub vl_sd: f64,
    /// Viral-load shift per unit of genotype distance (mismatch indicator or
    /// Hamming class index).
    pub vl_shift: f64,
    pub threshold: f64,
    /// `logit P(R = 1) = psi0 + psi1 Trt + psi2 VL` above the threshold.
    pub psi: Vec<f64>,
    /// Prevalences of Highrisk, Age65, Minority, Sex.
    pub covariate_probs: Vec<f64>,
    /// Log hazard ratios of the same covariates.
    pub covariate_effects: Vec<f64>,
    pub strata_props: Vec<f64>,
    /// Baseline hazard multipliers per stratum.
    pub strata_baseline: Vec<f64>,
    pub tau: f64,
    pub dropout_rate: f64,
    pub coding: CauseCoding,
    pub seed: u64,
}

impl Default for PseudoTrialConfig {
    fn default() -> Self {
        Self {
            n_vaccine: 13_271,
            n_placebo: 13_299,
            cases_vaccine: 72.0,
            cases_placebo: 713.0,
            mismatch_prob_vaccine: 0.10,
            mismatch_prob_placebo: 0.04,
            hamming_probs_vaccine: vec![0.30, 0.32, 0.22, 0.16],
            hamming_probs_placebo: vec![0.55, 0.28, 0.12, 0.05],
            vl_mean_vaccine: 3.0,
            vl_mean_placebo: 4.0,
            vl_sd: 1.5,
            vl_shift: 0.4,
            threshold: 1.0,
            psi: vec![-2.0, -0.3, 0.55],
            covariate_probs: vec![0.40, 0.25, 0.37, 0.47],
            covariate_effects: vec![0.30, 0.10, 0.20, 0.0],
            strata_props: vec![0.40, 0.35, 0.25],
            strata_baseline: vec![1.0, 1.3, 0.8],
            tau: 1.0,
            dropout_rate: 0.1,
            coding: CauseCoding::ThreeCause,
            seed: 20_200_727,
        }
    }
}

pub const PSEUDO_COVARIATES: [&str; 5] = ["trt", "highrisk", "age65", "minority", "sex"];

impl PseudoTrialConfig {
    pub fn n_causes(&self) -> usize {
        match self.coding {
            CauseCoding::ThreeCause => 3,
            CauseCoding::Hamming => 5,
        }
    }

    /// The low-viral-load cause and its threshold.
    pub fn structural(&self) -> StructuralCause {
        StructuralCause {
            cause: self.n_causes(),
            aux_threshold: self.threshold,
        }
    }

    pub fn cause_labels(&self) -> Vec<String> {
        let v: &[&str] = match self.coding {
            CauseCoding::ThreeCause => &["matched", "mismatched", "low_vl"],
            CauseCoding::Hamming => &["hd0", "hd1-4", "hd5-8", "hd9+", "low_vl"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {p} is not a probability")))
            }
        };
        prob("mismatch_prob_vaccine", self.mismatch_prob_vaccine)?;
        prob("mismatch_prob_placebo", self.mismatch_prob_placebo)?;
        for p in self
            .hamming_probs_vaccine
            .iter()
            .chain(&self.hamming_probs_placebo)
            .chain(&self.covariate_probs)
        {
            prob("probability", *p)?;
        }
        for (name, v) in [("hamming_probs_vaccine", &self.hamming_probs_vaccine), ("hamming_probs_placebo", &self.hamming_probs_placebo)] {
            if v.len() != 4 || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("{name} needs four probabilities summing to one")));
            }
        }
        if self.covariate_probs.len() != 4 || self.covariate_effects.len() != 4 {
            return Err(Error::Config("covariate_probs and covariate_effects need four entries".into()));
        }
        if self.psi.len() != 3 {
            return Err(Error::Config("psi needs three entries (intercept, trt, viral load)".into()));
        }
        if self.strata_props.is_empty()
            || self.strata_props.len() != self.strata_baseline.len()
            || self.strata_props.iter().chain(&self.strata_baseline).any(|&x| !(x > 0.0))
        {
            return Err(Error::Config("strata_props and strata_baseline need matching positive entries".into()));
        }
        if self.n_vaccine == 0 || self.n_placebo == 0 {
            return Err(Error::Config("both arms need participants".into()));
        }
        for (cases, n) in [(self.cases_vaccine, self.n_vaccine), (self.cases_placebo, self.n_placebo)] {
            if !(cases > 0.0 && cases < n as f64) {
                return Err(Error::Config(format!("expected case count {cases} outside (0, {n})")));
            }
        }
        if !(self.tau > 0.0 && self.vl_sd > 0.0 && self.dropout_rate >= 0.0) {
            return Err(Error::Config("tau and vl_sd must be positive, dropout_rate nonnegative".into()));
        }
        Ok(())
    }
}

struct Participant {
    trt: bool,
    x: [f64; 4],
    stratum: usize,
    risk: f64,
}

fn event_prob(h: f64, d: f64, tau: f64) -> f64 {
    let s = h + d;
    if s <= 0.0 {
        0.0
    } else {
        h / s * (1.0 - (-s * tau).exp())
    }
}

/// Arm-level base rate giving `target` expected events among `group`.
fn calibrate_rate(group: &[&Participant], target: f64, d: f64, tau: f64) -> f64 {
    let expected = |lam: f64| group.iter().map(|p| event_prob(lam * p.risk, d, tau)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, 1.0);
    while expected(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let mut u: f64 = rng.random();
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

/// Generates a pseudo-trial dataset.
pub fn generate_pseudo_trial(cfg: &PseudoTrialConfig) -> Result<AnalysisDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_vaccine + cfg.n_placebo;
    let total_props: f64 = cfg.strata_props.iter().sum();
    let people: Vec<Participant> = (0..n)
        .map(|i| {
            let trt = i < cfg.n_vaccine;
            let mut x = [0.0; 4];
            for (c, p) in cfg.covariate_probs.iter().enumerate() {
                x[c] = if rng.random::<f64>() < *p { 1.0 } else { 0.0 };
            }
            let stratum = categorical(
                &mut rng,
                &cfg.strata_props.iter().map(|p| p / total_props).collect::<Vec<_>>(),
            ) + 1;
            let lin: f64 = x.iter().zip(&cfg.covariate_effects).map(|(a, b)| a * b).sum();
            let risk = cfg.strata_baseline[stratum - 1] * lin.exp();
            Participant { trt, x, stratum, risk }
        })
        .collect();
    let vac: Vec<&Participant> = people.iter().filter(|p| p.trt).collect();
    let pla: Vec<&Participant> = people.iter().filter(|p| !p.trt).collect();
    let lam_v = calibrate_rate(&vac, cfg.cases_vaccine, cfg.dropout_rate, cfg.tau);
    let lam_p = calibrate_rate(&pla, cfg.cases_placebo, cfg.dropout_rate, cfg.tau);

    let records = people
        .iter()
        .map(|p| {
            let h = if p.trt { lam_v } else { lam_p } * p.risk;
            let et: f64 = Exp1.sample(&mut rng);
            let ec: f64 = Exp1.sample(&mut rng);
            let t = et / h;
            let c = if cfg.dropout_rate > 0.0 { ec / cfg.dropout_rate } else { f64::INFINITY };
            let stop = c.min(cfg.tau);
            let event = t <= stop;
            let time = if event { t } else { stop };
            // Genotype, viral load, and completeness are drawn for everyone
            // so that each participant consumes the same number of draws.
            let genotype = match cfg.coding {
                CauseCoding::ThreeCause => {
                    let q = if p.trt { cfg.mismatch_prob_vaccine } else { cfg.mismatch_prob_placebo };
                    usize::from(rng.random::<f64>() < q)
                }
                CauseCoding::Hamming => categorical(
                    &mut rng,
                    if p.trt { &cfg.hamming_probs_vaccine } else { &cfg.hamming_probs_placebo },
                ),
            };
            let eps: f64 = StandardNormal.sample(&mut rng);
            let mean = if p.trt { cfg.vl_mean_vaccine } else { cfg.vl_mean_placebo };
            let vl = mean + cfg.vl_shift * genotype as f64 + cfg.vl_sd * eps;
            let u: f64 = rng.random();
            let low = vl < cfg.threshold;
            let cause = if low { cfg.n_causes() } else { genotype + 1 };
            let trt = if p.trt { 1.0 } else { 0.0 };
            let r = 1.0 / (1.0 + (-(cfg.psi[0] + cfg.psi[1] * trt + cfg.psi[2] * vl)).exp());
            let complete = !event || low || u < r;
            let mut covariates = vec![trt];
            covariates.extend_from_slice(&p.x);
            SubjectRecord {
                time,
                event,
                complete,
                cause: (event && complete).then_some(cause),
                covariates,
                aux: event.then_some(vl),
                stratum: p.stratum,
            }
        })
        .collect();
    AnalysisDataset::with_labels(
        records,
        PSEUDO_COVARIATES.iter().map(|s| s.to_string()).collect(),
        cfg.cause_labels(),
        (1..=cfg.strata_props.len()).map(|k| k.to_string()).collect(),
        Some(cfg.tau),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_probability_rejected() {
        let cfg = PseudoTrialConfig {
            mismatch_prob_vaccine: 1.2,
            ..Default::default()
        };
        assert!(generate_pseudo_trial(&cfg).is_err());
    }

    #[test]
    fn case_counts_near_targets() {
        let ds = generate_pseudo_trial(&PseudoTrialConfig::default()).unwrap();
        let cases = |trt: f64| ds.records().iter().filter(|r| r.event && r.covariates[0] == trt).count() as f64;
        assert!((cases(1.0) - 72.0).abs() < 4.0 * 72f64.sqrt());
        assert!((cases(0.0) - 713.0).abs() < 4.0 * 713f64.sqrt());
    }

    #[test]
    fn low_viral_load_is_structural_and_complete() {
        let cfg = PseudoTrialConfig::default();
        let ds = generate_pseudo_trial(&cfg).unwrap();
        let s = cfg.structural();
        let mut seen = 0;
        for r in ds.records().iter().filter(|r| s.applies(r)) {
            assert!(r.complete);
            assert_eq!(r.cause, Some(3));
            seen += 1;
        }
        assert!(seen > 0);
    }
}
