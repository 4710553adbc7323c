use serde::{Deserialize, Serialize};

use super::score::StratumEvents;

/// Right-continuous step function starting at zero,
/// stored as jump times and sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub times: Vec<f64>,
    pub jumps: Vec<f64>,
    cumulative: Vec<f64>,
}

impl StepFunction {
    pub fn new(times: Vec<f64>, jumps: Vec<f64>) -> Self {
        assert_eq!(times.len(), jumps.len());
        let mut acc = 0.0;
        let cumulative = jumps
            .iter()
            .map(|j| {
                acc += j;
                acc
            })
            .collect();
        Self {
            times,
            jumps,
            cumulative,
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new())
    }

    /// Value at `t`, counting jumps at times `<= t`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.jumps.iter().all(|&j| j >= 0.0)
    }
}

pub(crate) fn from_events(ev: &StratumEvents) -> StepFunction {
    StepFunction::new(ev.times.clone(), ev.jumps())
}
