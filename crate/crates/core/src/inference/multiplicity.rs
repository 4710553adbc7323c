/// Step-down Sidak adjustment:
/// `p_adj(j) = max_{i <= j} 1 - (1 - p(i))^(J + 1 - i)` over ascending raw
/// p-values, returned in the input order.
pub fn step_down_sidak(raw: &[f64]) -> Vec<f64> {
    let m = raw.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running = 0.0_f64;
    for (rank, &idx) in order.iter().enumerate() {
        let p = raw[idx].clamp(0.0, 1.0);
        let k = (m - rank) as i32;
        let adj = if k == 1 { p } else { 1.0 - (1.0 - p).powi(k) };
        running = running.max(adj);
        out[idx] = running;
    }
    out
}

/// Single-step Bonferroni `min(1, J p)`.
pub fn bonferroni(raw: &[f64]) -> Vec<f64> {
    let m = raw.len() as f64;
    raw.iter().map(|p| (p * m).min(1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_strain_example() {
        let adj = step_down_sidak(&[0.01, 0.04]);
        assert!((adj[0] - 0.0199).abs() < 1e-15);
        assert_eq!(adj[1], 0.04);
    }

    #[test]
    fn equal_raw_values() {
        let adj = step_down_sidak(&[0.02; 3]);
        let first = 1.0 - 0.98f64.powi(3);
        assert!(adj.iter().all(|&a| a == first));
    }

    proptest! {
        #[test]
        fn adjusted_dominates_raw_and_is_monotone(raw in prop::collection::vec(0.0f64..=1.0, 1..8)) {
            let adj = step_down_sidak(&raw);
            let bon = bonferroni(&raw);
            for i in 0..raw.len() {
                prop_assert!(adj[i] >= raw[i] - 1e-15);
                prop_assert!(adj[i] <= bon[i] + 1e-15);
            }
            let mut order: Vec<usize> = (0..raw.len()).collect();
            order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(a.cmp(&b)));
            for w in order.windows(2) {
                prop_assert!(adj[w[0]] <= adj[w[1]]);
            }
        }
    }
}
