//! Small dense helpers shared by the modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.clone().cholesky().is_some()
}

/// Returns `L` with `L·Lᵀ = q`. Uses Cholesky when `q` is positive definite
/// and otherwise an eigendecomposition with eigenvalues in `[-tol, 0)` clamped
/// to zero.
pub fn psd_factor(q: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if !q.is_square() {
        return Err(invalid("covariance must be square"));
    }
    let asym = asymmetry(q);
    if asym > tol.max(1e-12) * (1.0 + q.amax()) {
        return Err(invalid(format!(
            "covariance is not symmetric (asymmetry {asym:e})"
        )));
    }
    let q = symmetrize(q);
    if let Some(ch) = q.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = SymmetricEigen::new(q);
    let mut scale = eig.eigenvalues.clone();
    for v in scale.iter_mut() {
        if *v < -tol {
            return Err(invalid(format!(
                "covariance is not positive semidefinite (eigenvalue {v:e})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&scale))
}

/// Symmetric inverse square root `p^{-1/2}` of a positive definite matrix.
pub fn inv_sqrt_spd(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(p));
    if eig.eigenvalues.iter().any(|&v| v <= 0.0) {
        return Err(invalid("matrix is not positive definite"));
    }
    let d = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// Solves `(I - a)·x = b`, rejecting numerically singular `I - a`.
pub fn solve_shifted_identity(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let m = DMatrix::identity(n, n) - a;
    let sv = m.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 1e-12 * smax.max(1.0)) {
        return Err(Error::SingularSystem(format!(
            "I - A is singular (smallest singular value {smin:e})"
        )));
    }
    m.lu()
        .solve(b)
        .ok_or_else(|| Error::SingularSystem("I - A is singular".into()))
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}
