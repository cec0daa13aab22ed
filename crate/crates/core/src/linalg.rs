//! Dense linear-algebra helpers: operator norm by power iteration, spectral
//! radius, and symmetric-matrix summaries.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative residual tolerance of [`operator_norm`].
pub const OPNORM_TOL: f64 = 1e-10;
const OPNORM_MAX_ITERS: usize = 200_000;

/// Largest singular value of `m`, via power iteration on `mᵀm`.
///
/// Iterates until the eigen-residual `‖G v - λ v‖` of the Gram matrix
/// falls below `OPNORM_TOL · λ`.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.transpose() * m;
    let Some((col, norm)) = gram
        .column_iter()
        .map(|c| c.norm())
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
    else {
        return 0.0;
    };
    if norm == 0.0 {
        return 0.0;
    }
    // G e_j has a nonzero component along the top eigenvector for some j
    let mut v: DVector<f64> = gram.column(col) / norm;
    let mut lambda = 0.0;
    for _ in 0..OPNORM_MAX_ITERS {
        let w = &gram * &v;
        lambda = v.dot(&w);
        let residual = (&w - &v * lambda).norm();
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        if residual <= OPNORM_TOL * lambda {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Spectral radius of a square matrix from its Schur form.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::domain(format!(
            "spectral radius needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let eig = m.complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// `log det` of a symmetric positive-definite matrix via Cholesky, `None`
/// when the factorization fails.
pub fn logdet_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(symmetrize(m))?;
    Some(
        2.0 * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>(),
    )
}
