//! Dense linear solve via Gaussian elimination with partial pivoting.
//!
//! Sized for the spline normal equations (tens of unknowns), not for
//! general linear algebra.

use thiserror::Error;

use crate::num::Float;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolveError {
    #[error("singular system (pivot below tolerance at column {col})")]
    Singular { col: usize },
    #[error("matrix shape does not match rhs")]
    ShapeMismatch,
}

/// Solves `a * x = b` for square row-major `a`, consuming both.
pub fn solve_dense<F: Float>(a: &mut [F], b: &mut [F]) -> Result<Vec<F>, SolveError> {
    let n = b.len();
    if a.len() != n * n {
        return Err(SolveError::ShapeMismatch);
    }
    // scale-aware pivot tolerance
    let max_abs = a.iter().fold(F::zero(), |m, &v| m.max(v.abs()));
    let tol = max_abs * F::epsilon() * F::from_usize(n * n).unwrap();

    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = row;
            }
        }
        if pivot_val <= tol {
            return Err(SolveError::Singular { col });
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / pivot;
            if factor == F::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] = a[row * n + k] - factor * v;
            }
            b[row] = b[row] - factor * b[col];
        }
    }

    let mut x = vec![F::zero(); n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc = acc - a[col * n + k] * x[k];
        }
        x[col] = acc / a[col * n + col];
    }
    Ok(x)
}
