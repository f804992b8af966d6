//! Small dense helpers on top of nalgebra. Every matrix in this crate is tiny
//! (dimension ≲ 10), so nothing here tries to be clever about memory.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// log det of a symmetric positive definite matrix, via Cholesky.
pub fn log_det_spd(m: &Mat) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalDomain("matrix is not positive definite".into()))?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn min_eigenvalue_sym(m: &Mat) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Solves X = L X Lᵀ + W for X by a Kronecker-product linear solve.
///
/// Requires ρ(L) < 1 for the solution to be the convergent series
/// Σ Lᵏ W (Lᵏ)ᵀ; otherwise the linear system may still be solvable but the
/// result is not positive semidefinite.
pub fn solve_discrete_lyapunov(l: &Mat, w: &Mat) -> Result<Mat> {
    let n = l.nrows();
    let kron = l.kronecker(l);
    let system = Mat::identity(n * n, n * n) - kron;
    // Column-major vec(): vec(L X Lᵀ) = (L ⊗ L) vec(X).
    let rhs = Vector::from_column_slice(w.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalDomain("singular Lyapunov operator".into()))?;
    Ok(Mat::from_column_slice(n, n, sol.as_slice()))
}

/// Builds a matrix from row-major nested rows.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
