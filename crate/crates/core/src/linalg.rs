//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Solves `a x = b`, trying Cholesky first and falling back to LU.
pub fn solve(a: &Matrix, b: &Vector) -> Option<Vector> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    let x = a.clone().lu().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub fn inverse(a: &Matrix) -> Option<Matrix> {
    let inv = a.clone().try_inverse()?;
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

/// Whether a symmetric matrix admits a Cholesky factorisation.
pub fn is_positive_definite(a: &Matrix) -> bool {
    a.clone().cholesky().is_some()
}

pub fn symmetrize(a: &mut Matrix) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Clips negative eigenvalues of a symmetric matrix at zero.
///
/// Returns the repaired matrix and the total clipped mass (sum of the
/// absolute values of the negative eigenvalues).
pub fn clip_to_psd(a: &Matrix) -> (Matrix, f64) {
    let mut sym = a.clone();
    symmetrize(&mut sym);
    let eig = sym.clone().symmetric_eigen();
    let repair: f64 = eig.eigenvalues.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    if repair == 0.0 {
        return (sym, 0.0);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * Matrix::from_diagonal(&clipped) * v.transpose();
    symmetrize(&mut out);
    (out, repair)
}

/// Lower Cholesky factor of a PSD matrix, adding a diagonal ridge of up to
/// `max_ridge_frac * trace` when the plain factorisation fails.
pub fn cholesky_with_ridge(a: &Matrix, max_ridge_frac: f64) -> Option<(Matrix, f64)> {
    if let Some(ch) = a.clone().cholesky() {
        return Some((ch.l(), 0.0));
    }
    let trace = a.trace().abs().max(f64::MIN_POSITIVE);
    let mut ridge = trace * 1e-16;
    while ridge <= max_ridge_frac * trace {
        let shifted = a + Matrix::identity(a.nrows(), a.ncols()) * ridge;
        if let Some(ch) = shifted.cholesky() {
            return Some((ch.l(), ridge));
        }
        ridge *= 10.0;
    }
    None
}

/// `x x^T`
pub fn outer(x: &Vector) -> Matrix {
    x * x.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_repairs_indefinite() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let (b, repair) = clip_to_psd(&a);
        assert!((repair - 1.0).abs() < 1e-12);
        let eig = b.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-12));
    }

    #[test]
    fn ridge_rescues_singular_psd() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (l, ridge) = cholesky_with_ridge(&a, 1e-10).unwrap();
        assert!(ridge > 0.0 && ridge <= 2e-10);
        assert!(((&l * l.transpose()) - &a).amax() < 1e-8);
    }

    #[test]
    fn solve_matches_inverse() {
        let a = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = Vector::from_vec(vec![1.0, 2.0]);
        let x = solve(&a, &b).unwrap();
        let y = inverse(&a).unwrap() * &b;
        assert!((x - y).amax() < 1e-14);
    }
}
