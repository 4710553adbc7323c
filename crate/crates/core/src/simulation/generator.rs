use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::scenario::ScenarioConfig;
use crate::data::{AnalysisDataset, SubjectRecord};
use crate::error::{Error, Result};

/// Name of the random number generator, recorded in manifests.
pub const GENERATOR_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), stream = replicate";
const ROOT_TOL: f64 = 1e-10;
/// Stream reserved for the censoring-rate pre-sample.
const TUNING_STREAM: u64 = u64::MAX;

/// One simulated subject before censoring and missingness are applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSubject {
    pub stratum: usize,
    pub z1: f64,
    pub z2: f64,
    /// Failure time, not truncated at the horizon.
    pub t: f64,
    pub cause: usize,
    pub mark: f64,
    /// Unit-rate exponential; the censoring time is `e_cens / rate`.
    pub e_cens: f64,
    /// Uniform used for the completeness draw.
    pub u_complete: f64,
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Solves `sum_j c_j t^(theta_j + 1) / (theta_j + 1) = e` for `t`.
pub fn invert_cumulative_hazard(c: &[f64], theta: &[f64], e: f64) -> f64 {
    if theta.iter().all(|&th| th == theta[0]) {
        let s: f64 = c.iter().sum();
        return (e * (theta[0] + 1.0) / s).powf(1.0 / (theta[0] + 1.0));
    }
    let cum = |t: f64| -> f64 {
        c.iter()
            .zip(theta)
            .map(|(ci, th)| ci * t.powf(th + 1.0) / (th + 1.0))
            .sum()
    };
    let rate = |t: f64| -> f64 { c.iter().zip(theta).map(|(ci, th)| ci * t.powf(*th)).sum() };
    let (mut lo, mut hi) = (0.0, 1.0);
    while cum(hi) < e {
        lo = hi;
        hi *= 2.0;
    }
    let mut t = 0.5 * (lo + hi);
    while hi - lo > ROOT_TOL {
        let f = cum(t) - e;
        if f == 0.0 {
            return t;
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d = rate(t);
        let newton = t - f / d;
        t = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (cum(t) - e).abs() <= 1e-15 * e.max(1.0) {
            return t;
        }
    }
    t
}

/// Draws the latent subjects of one replicate.
pub fn latent_sample(cfg: &ScenarioConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<LatentSubject> {
    let jn = cfg.n_causes();
    let mut c = vec![0.0; jn];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let stratum = cfg.stratum_of(i, n);
        let theta = &cfg.theta[stratum - 1];
        let z1 = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
        let z2: f64 = rng.random();
        for (cj, (a, g)) in c.iter_mut().zip(cfg.alpha.iter().zip(&cfg.gamma)) {
            *cj = (a * z1 + g * z2).exp();
        }
        let e: f64 = Exp1.sample(rng);
        let t = invert_cumulative_hazard(&c, theta, e);
        let hz: Vec<f64> = (0..jn).map(|j| c[j] * t.powf(theta[j])).collect();
        let total: f64 = hz.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut cause = jn;
        for (j, h) in hz.iter().enumerate() {
            if u < *h {
                cause = j + 1;
                break;
            }
            u -= h;
        }
        let v = cause as f64;
        let lo = 2.0 * cfg.aux_a * (v - 1.0);
        let hi = 1.0 + 0.5 * cfg.aux_a * v;
        let mark = lo + (hi - lo) * rng.random::<f64>();
        let e_cens: f64 = Exp1.sample(rng);
        let u_complete: f64 = rng.random();
        out.push(LatentSubject {
            stratum,
            z1,
            z2,
            t,
            cause,
            mark,
            e_cens,
            u_complete,
        });
    }
    out
}

fn censored_fraction(sample: &[LatentSubject], rate: f64, tau: f64) -> f64 {
    let cens = sample
        .iter()
        .filter(|s| {
            let c = if rate > 0.0 { s.e_cens / rate } else { f64::INFINITY };
            s.t > c.min(tau)
        })
        .count();
    cens as f64 / sample.len() as f64
}

/// Exponential censoring rate giving `cfg.censor_target` overall censoring,
/// found by bisection on a common-random-numbers pre-sample.
pub fn tune_censoring_rate(cfg: &ScenarioConfig) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(TUNING_STREAM);
    let sample = latent_sample(cfg, cfg.tuning_sample, &mut rng);
    let target = cfg.censor_target;
    let floor = censored_fraction(&sample, 0.0, cfg.tau);
    if target <= floor {
        return Err(Error::CensoringTarget {
            target,
            min: floor,
            max: 1.0,
        });
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while censored_fraction(&sample, hi, cfg.tau) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::CensoringTarget {
                target,
                min: floor,
                max: censored_fraction(&sample, hi, cfg.tau),
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if censored_fraction(&sample, mid, cfg.tau) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Generates replicates of a scenario with a fixed censoring rate.
#[derive(Debug, Clone)]
pub struct TrialGenerator {
    pub cfg: ScenarioConfig,
    pub censor_rate: f64,
}

impl TrialGenerator {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let censor_rate = match cfg.censor_rate {
            Some(r) => r,
            None => tune_censoring_rate(&cfg)?,
        };
        Ok(Self { cfg, censor_rate })
    }

    pub fn rng(&self, rep: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(rep);
        rng
    }

    pub fn latent(&self, rep: u64) -> Vec<LatentSubject> {
        latent_sample(&self.cfg, self.cfg.n, &mut self.rng(rep))
    }

    /// Observed-data replicate `rep`.
    pub fn generate(&self, rep: u64) -> Result<AnalysisDataset> {
        let cfg = &self.cfg;
        let psi = &cfg.psi_true;
        let records = self
            .latent(rep)
            .into_iter()
            .map(|s| {
                let c = if self.censor_rate > 0.0 {
                    s.e_cens / self.censor_rate
                } else {
                    f64::INFINITY
                };
                let stop = c.min(cfg.tau);
                let event = s.t <= stop;
                let time = if event { s.t } else { stop };
                let complete = !event || s.u_complete < expit(psi[0] + psi[1] * s.z1 + psi[2] * s.mark);
                SubjectRecord {
                    time,
                    event,
                    complete,
                    cause: (event && complete).then_some(s.cause),
                    covariates: vec![s.z1, s.z2],
                    aux: event.then_some(s.mark),
                    stratum: s.stratum,
                }
            })
            .collect();
        AnalysisDataset::new(
            records,
            vec!["z1".into(), "z2".into()],
            cfg.n_causes(),
            cfg.n_strata(),
            Some(cfg.tau),
        )
    }
}

/// One replicate of `cfg`; tunes the censoring rate first when needed.
pub fn generate_trial(cfg: &ScenarioConfig, rep: u64) -> Result<AnalysisDataset> {
    TrialGenerator::new(cfg.clone())?.generate(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::scenario::{AuxLevel, Setting};

    #[test]
    fn numeric_root_matches_closed_form() {
        let c = [0.7, 1.3];
        let t1 = invert_cumulative_hazard(&c, &[0.5, 0.5], 0.8);
        let t2 = invert_cumulative_hazard(&c, &[0.5, 0.5 + 1e-13], 0.8);
        assert!((t1 - t2).abs() < 1e-9);
        let t = invert_cumulative_hazard(&c, &[0.2, 1.0], 1.7);
        let cum = 0.7 * t.powf(1.2) / 1.2 + 1.3 * t.powi(2) / 2.0;
        assert!((cum - 1.7).abs() < 1e-9);
    }

    #[test]
    fn reproducible_and_censoring_on_target() {
        let mut cfg = ScenarioConfig::preset(Setting::M3, AuxLevel::Aux0);
        cfg.tuning_sample = 50_000;
        let g = TrialGenerator::new(cfg).unwrap();
        let a = g.generate(3).unwrap();
        let b = g.generate(3).unwrap();
        assert_eq!(a.records(), b.records());
        let mut frac = 0.0;
        for rep in 0..10 {
            let ds = g.generate(rep).unwrap();
            frac += ds.records().iter().filter(|r| !r.event).count() as f64 / ds.n() as f64;
        }
        assert!((frac / 10.0 - 0.4).abs() < 0.03);
    }

    #[test]
    fn unattainable_target_reports_range() {
        let mut cfg = ScenarioConfig::preset(Setting::M3, AuxLevel::Aux0);
        cfg.censor_target = 0.01;
        cfg.tuning_sample = 5000;
        match TrialGenerator::new(cfg) {
            Err(Error::CensoringTarget { min, .. }) => assert!(min > 0.01),
            other => panic!("unexpected {other:?}"),
        }
    }
}
