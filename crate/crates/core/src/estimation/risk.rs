use crate::data::AnalysisDataset;
use crate::linalg::{Matrix, Vector};

/// Risk-set sums `S0, S1, S2` for one stratum at one time, normalised by the
/// stratum size.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSums {
    pub s0: f64,
    pub s1: Vector,
    pub s2: Matrix,
    /// Number of records at risk.
    pub at_risk: usize,
}

impl RiskSums {
    pub fn is_empty(&self) -> bool {
        self.s0 <= 0.0
    }

    /// `Z-bar = S1 / S0`; `None` on an empty risk set.
    pub fn zbar(&self) -> Option<Vector> {
        (!self.is_empty()).then(|| &self.s1 / self.s0)
    }

    /// `S2 / S0 - Z-bar Z-bar'`.
    pub fn jmat(&self) -> Option<Matrix> {
        let zb = self.zbar()?;
        Some(&self.s2 / self.s0 - &zb * zb.transpose())
    }
}

/// Sums over records of `stratum` with `x >= t`, each weighted by
/// `weights[i] * exp(beta'z_i)` (unit weights when `weights` is `None`).
pub fn risk_sums(
    ds: &AnalysisDataset,
    stratum: usize,
    t: f64,
    beta: &Vector,
    weights: Option<&[f64]>,
) -> RiskSums {
    let p = ds.p();
    let mut out = RiskSums {
        s0: 0.0,
        s1: Vector::zeros(p),
        s2: Matrix::zeros(p, p),
        at_risk: 0,
    };
    let mut n_k = 0usize;
    for (i, r) in ds.records().iter().enumerate() {
        if r.stratum != stratum {
            continue;
        }
        n_k += 1;
        if r.time < t {
            continue;
        }
        let z = Vector::from_column_slice(&r.covariates);
        let w = weights.map_or(1.0, |w| w[i]) * beta.dot(&z).exp();
        out.at_risk += 1;
        out.s0 += w;
        out.s2 += &z * z.transpose() * w;
        out.s1 += z * w;
    }
    if n_k > 0 {
        let nk = n_k as f64;
        out.s0 /= nk;
        out.s1 /= nk;
        out.s2 /= nk;
    }
    out
}

/// Records of each stratum sorted by decreasing time, with tied times
/// grouped. Built once per dataset and shared by every score evaluation.
#[derive(Debug, Clone)]
pub(crate) struct RiskIndex {
    pub strata: Vec<StratumIndex>,
}

#[derive(Debug, Clone)]
pub(crate) struct StratumIndex {
    /// Record indices, latest time first.
    pub order: Vec<usize>,
    /// Half-open ranges into `order` sharing one time.
    pub ties: Vec<(usize, usize)>,
}

impl RiskIndex {
    pub fn new(ds: &AnalysisDataset) -> Self {
        let strata = ds
            .strata_members()
            .into_iter()
            .map(|mut idx| {
                let recs = ds.records();
                idx.sort_by(|&a, &b| recs[b].time.total_cmp(&recs[a].time).then(a.cmp(&b)));
                let mut ties = Vec::new();
                let mut start = 0;
                for pos in 1..=idx.len() {
                    if pos == idx.len() || recs[idx[pos]].time != recs[idx[start]].time {
                        ties.push((start, pos));
                        start = pos;
                    }
                }
                StratumIndex { order: idx, ties }
            })
            .collect();
        Self { strata }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::rec;
    use approx::assert_relative_eq;

    fn toy() -> AnalysisDataset {
        let recs = vec![
            rec(1.0, true, true, Some(1), &[0.0], 1),
            rec(2.0, true, true, Some(1), &[1.0], 1),
            rec(3.0, false, true, None, &[1.0], 1),
        ];
        AnalysisDataset::new(recs, vec!["z".into()], 1, 1, None).unwrap()
    }

    #[test]
    fn hand_computed_sums() {
        let ds = toy();
        let rs = risk_sums(&ds, 1, 0.5, &Vector::from_element(1, 2f64.ln()), None);
        assert_relative_eq!(rs.s0, 5.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(rs.s1[0], 4.0 / 3.0, epsilon = 1e-12);
        assert_eq!(rs.at_risk, 3);
    }

    #[test]
    fn zero_beta_gives_counts_and_means() {
        let ds = toy();
        let rs = risk_sums(&ds, 1, 1.5, &Vector::zeros(1), None);
        assert_relative_eq!(rs.s0, 2.0 / 3.0);
        assert_relative_eq!(rs.zbar().unwrap()[0], 1.0);
        let unit = vec![1.0; 3];
        assert_eq!(rs, risk_sums(&ds, 1, 1.5, &Vector::zeros(1), Some(&unit)));
    }

    #[test]
    fn empty_risk_set_flagged() {
        let rs = risk_sums(&toy(), 1, 10.0, &Vector::zeros(1), None);
        assert!(rs.is_empty());
        assert!(rs.zbar().is_none());
    }

    #[test]
    fn index_groups_ties() {
        let recs = vec![
            rec(2.0, true, true, Some(1), &[0.0], 1),
            rec(1.0, false, true, None, &[0.0], 1),
            rec(2.0, false, true, None, &[0.0], 1),
        ];
        let ds = AnalysisDataset::new(recs, vec!["z".into()], 1, 1, None).unwrap();
        let ix = RiskIndex::new(&ds);
        assert_eq!(ix.strata[0].order, vec![0, 2, 1]);
        assert_eq!(ix.strata[0].ties, vec![(0, 2), (2, 3)]);
    }
}
