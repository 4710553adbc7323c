use serde::{Deserialize, Serialize};

use super::baseline::StepFunction;
use crate::error::{Error, Result};

/// Smoothing kernel with support `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Biweight,
}

impl Kernel {
    pub fn eval(self, x: f64) -> f64 {
        if x.abs() > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Epanechnikov => 0.75 * (1.0 - x * x),
            Kernel::Biweight => 0.9375 * (1.0 - x * x).powi(2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Biweight => "biweight",
        }
    }
}

/// Kernel-smoothed hazard on a grid. Values are `None` outside `[h, tau - h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedHazard {
    pub grid: Vec<f64>,
    pub values: Vec<Option<f64>>,
    pub bandwidth: f64,
    pub kernel: Kernel,
}

impl SmoothedHazard {
    pub fn interior(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid
            .iter()
            .zip(&self.values)
            .filter_map(|(&t, v)| v.map(|v| (t, v)))
    }
}

/// Default bandwidth `tau * min(0.2, n_k^(-1/5))`.
pub fn default_bandwidth(tau: f64, n_k: usize) -> f64 {
    tau * 0.2_f64.min((n_k.max(1) as f64).powf(-0.2))
}

/// Convolves the jumps of `cum` with `K_h`.
pub fn smooth_hazard(
    cum: &StepFunction,
    kernel: Kernel,
    h: f64,
    grid: &[f64],
    tau: f64,
) -> Result<SmoothedHazard> {
    if !(h > 0.0) {
        return Err(Error::Invalid(format!("bandwidth must be positive, got {h}")));
    }
    if h >= tau / 2.0 {
        return Err(Error::Invalid(format!(
            "bandwidth {h} must be below half the horizon ({})",
            tau / 2.0
        )));
    }
    if let Some(t) = grid.iter().find(|&&t| !(0.0..=tau).contains(&t)) {
        return Err(Error::Invalid(format!("grid point {t} outside [0, {tau}]")));
    }
    let values = grid
        .iter()
        .map(|&t| {
            if t < h || t > tau - h {
                return None;
            }
            let lo = cum.times.partition_point(|&s| s < t - h);
            let hi = cum.times.partition_point(|&s| s <= t + h);
            Some(
                (lo..hi)
                    .map(|i| kernel.eval((t - cum.times[i]) / h) * cum.jumps[i])
                    .sum::<f64>()
                    / h,
            )
        })
        .collect();
    Ok(SmoothedHazard {
        grid: grid.to_vec(),
        values,
        bandwidth: h,
        kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_symmetric_compact() {
        for k in [Kernel::Epanechnikov, Kernel::Biweight] {
            for i in 0..=300 {
                let x = -1.5 + i as f64 * 0.01;
                assert_eq!(k.eval(x), k.eval(-x));
                if x.abs() > 1.0 {
                    assert_eq!(k.eval(x), 0.0);
                }
            }
        }
    }

    #[test]
    fn kernels_integrate_to_one() {
        for k in [Kernel::Epanechnikov, Kernel::Biweight] {
            let m = 20_000;
            let s: f64 = (0..m).map(|i| k.eval(-1.0 + (i as f64 + 0.5) * 2.0 / m as f64)).sum();
            assert_relative_eq!(s * 2.0 / m as f64, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn single_jump() {
        let cum = StepFunction::new(vec![0.5], vec![1.0]);
        let h = 0.1;
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let sm = smooth_hazard(&cum, Kernel::Epanechnikov, h, &grid, 1.0).unwrap();
        for (t, v) in sm.interior() {
            assert_relative_eq!(v, Kernel::Epanechnikov.eval((t - 0.5) / h) / h, epsilon = 1e-12);
        }
        assert_relative_eq!(sm.values[50].unwrap(), 7.5, epsilon = 1e-12);
        assert!(sm.values[5].is_none() && sm.values[95].is_none());
    }

    #[test]
    fn linear_cumulative_recovers_slope() {
        let c = 2.5;
        let m = 2000;
        let times: Vec<f64> = (1..=m).map(|i| i as f64 / m as f64).collect();
        let cum = StepFunction::new(times, vec![c / m as f64; m]);
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let sm = smooth_hazard(&cum, Kernel::Epanechnikov, 0.1, &grid, 1.0).unwrap();
        let mut seen = 0;
        for (_, v) in sm.interior() {
            assert!((v / c - 1.0).abs() < 0.02);
            seen += 1;
        }
        assert!(seen > 30);
    }

    #[test]
    fn wide_bandwidth_rejected() {
        let cum = StepFunction::empty();
        assert!(smooth_hazard(&cum, Kernel::Epanechnikov, 0.5, &[0.5], 1.0).is_err());
    }
}
