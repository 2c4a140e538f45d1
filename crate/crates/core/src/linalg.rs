//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Operator (spectral) norm: largest singular value.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// Max-abs entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Cholesky factorisation of a symmetric positive-definite matrix.
pub fn cholesky(a: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(a.clone()).ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

/// Inverse of a symmetric positive-definite matrix, by solving `A X = I`
/// column-wise against its Cholesky factor. The result is symmetrised.
pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = cholesky(a, what)?;
    let n = a.nrows();
    let x = chol.solve(&DMatrix::identity(n, n));
    Ok(symmetrize(&x))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Condition estimate from the Cholesky diagonal, `(max Lᵢᵢ / min Lᵢᵢ)²`.
/// A lower bound on the true 2-norm condition number.
pub fn cholesky_condition_estimate(chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = chol.l_dirty();
    let diag = l.diagonal();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    (max / min).powi(2)
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix via its
/// eigendecomposition. Eigenvalues below `rtol * max_eig` are treated as zero.
/// Returns the pseudo-inverse and the numerical rank.
pub fn psd_pseudo_inverse(a: &DMatrix<f64>, rtol: f64) -> (DMatrix<f64>, usize) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tol = rtol * max.max(f64::MIN_POSITIVE);
    let mut out = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (k, &mu) in eig.eigenvalues.iter().enumerate() {
        if mu > tol {
            rank += 1;
            let u = eig.eigenvectors.column(k);
            out += (u * u.transpose()) / mu;
        }
    }
    (out, rank)
}

/// Numerical rank and extreme eigenvalues of a symmetric matrix.
pub fn symmetric_spectrum(a: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(a.clone()).eigenvalues
}
