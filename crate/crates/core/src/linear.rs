//! Sparse linear solves for the (indefinite, non-symmetric) saddle-point
//! systems produced by both nonlinear strategies.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

pub type SparseMatrix = SparseColMat<usize, f64>;

/// Default relative residual tolerance of [`linear_solve`].
pub const DEFAULT_LINEAR_TOL: f64 = 1e-10;

/// Builds a square sparse matrix, summing duplicate entries.
pub fn from_triplets(n: usize, triplets: &[Triplet<usize, usize, f64>]) -> Result<SparseMatrix> {
    SparseColMat::try_new_from_triplets(n, n, triplets)
        .map_err(|e| Error::Dimension(format!("sparse matrix construction failed: {e:?}")))
}

pub fn mat_vec(a: &SparseMatrix, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for (i, &v) in a.row_idx_of_col(j).zip(a.val_of_col(j)) {
            y[i] += v * xj;
        }
    }
    y
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = mat_vec(a, x);
    b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
}

/// Solves `A x = b` by sparse LU with partial pivoting plus one step of
/// iterative refinement when needed. The result satisfies
/// `‖Ax − b‖ ≤ max(1e-12, linear_tol·‖b‖)` or an error is returned.
pub fn linear_solve(a: &SparseMatrix, b: &[f64], linear_tol: f64) -> Result<Vec<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Dimension(format!(
            "linear solve with {}x{} matrix and rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let rhs_norm = norm2(b);
    if n == 0 {
        return Ok(Vec::new());
    }
    let lu = a.sp_lu().map_err(|e| Error::LinearSolve {
        reason: format!("factorization failed: {e:?}"),
        residual: f64::NAN,
        rhs_norm,
    })?;
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let col = Col::<f64>::from_fn(n, |i| rhs[i]);
        let x = lu.solve(&col);
        (0..n).map(|i| x[i]).collect()
    };
    let bound = f64::max(1e-12, linear_tol * rhs_norm);
    let mut x = solve(b);
    let mut r = residual(a, &x, b);
    let mut rn = norm2(&r);
    if rn.is_finite() && rn > bound {
        let dx = solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        r = residual(a, &x, b);
        rn = norm2(&r);
    }
    if !rn.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolve {
            reason: "matrix is numerically singular (non-finite solution)".into(),
            residual: rn,
            rhs_norm,
        });
    }
    if rn > bound {
        return Err(Error::LinearSolve {
            reason: "residual above tolerance; matrix is likely rank deficient".into(),
            residual: rn,
            rhs_norm,
        });
    }
    Ok(x)
}
