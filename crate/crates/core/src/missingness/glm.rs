//! Damped-Newton maximum likelihood for binary and multinomial logistic
//! regression.

use crate::linalg::{solve, Matrix, Vector};

pub(crate) const MAX_ITER: usize = 100;
pub(crate) const SCORE_TOL: f64 = 1e-8;
/// Converged linear predictors beyond this size (probabilities within ~1e-13 of
/// 0 or 1) mean the likelihood is being pushed towards a boundary: the data
/// are (quasi-)separated.
const SEPARATION_ETA: f64 = 30.0;
/// Linear predictor size at which the iterations are treated as diverging.
const DIVERGENCE_ETA: f64 = 40.0;

#[derive(Debug)]
pub(crate) enum GlmFailure {
    /// Index of the feature most responsible for the separation.
    Separation(usize),
    NoConvergence { iterations: usize, trace: String },
}

#[derive(Debug, Clone)]
pub(crate) struct GlmFit {
    /// Stacked coefficients, class-major for the multinomial model.
    pub coef: Vector,
    pub iterations: usize,
}

#[inline]
pub(crate) fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn log1pexp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn dot(x: &[f64], b: &[f64]) -> f64 {
    x.iter().zip(b).map(|(a, c)| a * c).sum()
}

/// Feature blamed for separation: largest |coefficient| times feature spread,
/// skipping the intercept unless it is the only feature.
fn blame(rows: &[Vec<f64>], coef: &[f64], q: usize) -> usize {
    if q == 1 {
        return 0;
    }
    let n = rows.len() as f64;
    let mut best = (1, f64::NEG_INFINITY);
    for f in 1..q {
        let mean = rows.iter().map(|r| r[f]).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut size = 0.0_f64;
        let classes = coef.len() / q;
        for c in 0..classes {
            size = size.max(coef[c * q + f].abs() * sd.max(1e-12));
        }
        if size > best.1 {
            best = (f, size);
        }
    }
    best.0
}

/// Binary logistic regression of `y` on `rows` (each row includes the
/// intercept column).
pub(crate) fn fit_logistic(rows: &[Vec<f64>], y: &[bool]) -> Result<GlmFit, GlmFailure> {
    let q = rows[0].len();
    let loglik = |b: &[f64]| -> f64 {
        rows.iter()
            .zip(y)
            .map(|(x, &yi)| {
                let eta = dot(x, b);
                if yi { eta - log1pexp(eta) } else { -log1pexp(eta) }
            })
            .sum()
    };
    let grad_hess = |b: &[f64]| -> (Vector, Matrix) {
        let mut g = Vector::zeros(q);
        let mut h = Matrix::zeros(q, q);
        for (x, &yi) in rows.iter().zip(y) {
            let p = expit(dot(x, b));
            let resid = if yi { 1.0 - p } else { -p };
            let w = p * (1.0 - p);
            for a in 0..q {
                g[a] += resid * x[a];
                for c in 0..=a {
                    h[(a, c)] += w * x[a] * x[c];
                }
            }
        }
        for a in 0..q {
            for c in 0..a {
                h[(c, a)] = h[(a, c)];
            }
        }
        (g, h)
    };
    newton(q, rows, loglik, grad_hess, |b| {
        rows.iter().map(|x| dot(x, b).abs()).fold(0.0, f64::max)
    })
}

/// Multinomial logistic regression with the last class as reference.
/// `y[i]` is the class index in `0..m`.
pub(crate) fn fit_multinomial(rows: &[Vec<f64>], y: &[usize], m: usize) -> Result<GlmFit, GlmFailure> {
    let q = rows[0].len();
    let k = m - 1;
    let dim = k * q;
    let probs = |x: &[f64], b: &[f64], out: &mut Vec<f64>| {
        out.clear();
        let etas: Vec<f64> = (0..k).map(|c| dot(x, &b[c * q..(c + 1) * q])).collect();
        let mx = etas.iter().cloned().fold(0.0_f64, f64::max);
        let denom = (-mx).exp() + etas.iter().map(|e| (e - mx).exp()).sum::<f64>();
        out.extend(etas.iter().map(|e| (e - mx).exp() / denom));
        etas
    };
    let loglik = |b: &[f64]| -> f64 {
        let mut buf = Vec::with_capacity(k);
        rows.iter()
            .zip(y)
            .map(|(x, &yi)| {
                let etas = probs(x, b, &mut buf);
                let mx = etas.iter().cloned().fold(0.0_f64, f64::max);
                let lse = mx + ((-mx).exp() + etas.iter().map(|e| (e - mx).exp()).sum::<f64>()).ln();
                let own = if yi < k { etas[yi] } else { 0.0 };
                own - lse
            })
            .sum()
    };
    let grad_hess = |b: &[f64]| -> (Vector, Matrix) {
        let mut g = Vector::zeros(dim);
        let mut h = Matrix::zeros(dim, dim);
        let mut p = Vec::with_capacity(k);
        for (x, &yi) in rows.iter().zip(y) {
            probs(x, b, &mut p);
            for c in 0..k {
                let resid = if yi == c { 1.0 - p[c] } else { -p[c] };
                for a in 0..q {
                    g[c * q + a] += resid * x[a];
                }
                for d in 0..k {
                    let w = if c == d { p[c] * (1.0 - p[c]) } else { -p[c] * p[d] };
                    for a in 0..q {
                        for e in 0..q {
                            h[(c * q + a, d * q + e)] += w * x[a] * x[e];
                        }
                    }
                }
            }
        }
        (g, h)
    };
    newton(dim, rows, loglik, grad_hess, |b| {
        rows.iter()
            .flat_map(|x| (0..k).map(move |c| dot(x, &b[c * q..(c + 1) * q]).abs()))
            .fold(0.0, f64::max)
    })
}

fn newton(
    dim: usize,
    rows: &[Vec<f64>],
    loglik: impl Fn(&[f64]) -> f64,
    grad_hess: impl Fn(&[f64]) -> (Vector, Matrix),
    max_eta: impl Fn(&[f64]) -> f64,
) -> Result<GlmFit, GlmFailure> {
    let q = rows[0].len();
    let mut b = Vector::zeros(dim);
    let mut ll = loglik(b.as_slice());
    let mut trace = Vec::new();
    for it in 0..MAX_ITER {
        let (g, h) = grad_hess(b.as_slice());
        let gmax = g.amax();
        trace.push(format!("{gmax:.3e}"));
        let eta = max_eta(b.as_slice());
        if eta > DIVERGENCE_ETA || (gmax <= SCORE_TOL && eta > SEPARATION_ETA) {
            return Err(GlmFailure::Separation(blame(rows, b.as_slice(), q)));
        }
        if gmax <= SCORE_TOL {
            return Ok(GlmFit {
                coef: b,
                iterations: it,
            });
        }
        let step = match solve(&h, &g) {
            Some(s) => s,
            None => return Err(GlmFailure::Separation(blame(rows, b.as_slice(), q))),
        };
        let mut t = 1.0;
        loop {
            let cand = &b + &step * t;
            let cll = loglik(cand.as_slice());
            if cll.is_finite() && cll >= ll - 1e-12 * ll.abs().max(1.0) {
                b = cand;
                ll = cll;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                // No ascent along the Newton direction: accept and let the
                // score check decide.
                b = cand;
                ll = cll;
                break;
            }
        }
    }
    Err(GlmFailure::NoConvergence {
        iterations: MAX_ITER,
        trace: trace.join(","),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_intercept_is_log_odds() {
        let rows = vec![vec![1.0]; 100];
        let y: Vec<bool> = (0..100).map(|i| i >= 30).collect();
        let fit = fit_logistic(&rows, &y).unwrap();
        assert!((expit(fit.coef[0]) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn multinomial_intercepts_match_proportions() {
        let rows = vec![vec![1.0]; 100];
        let y: Vec<usize> = (0..100).map(|i| if i < 20 { 0 } else if i < 50 { 1 } else { 2 }).collect();
        let fit = fit_multinomial(&rows, &y, 3).unwrap();
        // log(p_c / p_ref)
        assert!((fit.coef[0] - (0.2f64 / 0.5).ln()).abs() < 1e-10);
        assert!((fit.coef[1] - (0.3f64 / 0.5).ln()).abs() < 1e-10);
    }

    #[test]
    fn separation_is_detected() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        match fit_logistic(&rows, &y) {
            Err(GlmFailure::Separation(f)) => assert_eq!(f, 1),
            other => panic!("expected separation, got {other:?}"),
        }
    }
}
