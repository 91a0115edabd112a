//! Least-squares approximating cubic B-splines on equidistant knots.
//!
//! The fit minimizes the squared residual of the spline against all data
//! points; it does not interpolate, which keeps isolated latency spikes from
//! bending the curve.

use thiserror::Error;

use super::linspace;
use super::solve::{solve_dense, SolveError};
use crate::num::Float;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplineError {
    #[error("too few points: got {got}, need at least {need}")]
    TooFewPoints { got: usize, need: usize },
    #[error("need at least two knots, got {0}")]
    TooFewKnots(usize),
    #[error("x range is degenerate")]
    DegenerateSpan,
    #[error("normal equations are singular (a knot span has no support)")]
    SingularSystem,
}

/// A fitted clamped cubic B-spline.
#[derive(Debug, Clone)]
pub struct CubicSpline<F> {
    /// Full clamped knot vector (end knots repeated four times).
    knots: Vec<F>,
    coeffs: Vec<F>,
    lo: F,
    hi: F,
}

impl<F: Float> CubicSpline<F> {
    /// Fits a least-squares cubic spline with `n_knots` equidistant knots
    /// spanning the x range of the data.
    pub fn fit_least_squares(x: &[F], y: &[F], n_knots: usize) -> Result<Self, SplineError> {
        if n_knots < 2 {
            return Err(SplineError::TooFewKnots(n_knots));
        }
        let n_basis = n_knots + 2;
        if x.len() < n_basis || x.len() != y.len() {
            return Err(SplineError::TooFewPoints { got: x.len().min(y.len()), need: n_basis });
        }
        let lo = x.iter().cloned().fold(F::infinity(), F::min);
        let hi = x.iter().cloned().fold(F::neg_infinity(), F::max);
        if !(hi > lo) {
            return Err(SplineError::DegenerateSpan);
        }

        let simple = linspace(lo, hi, n_knots);
        let mut knots = Vec::with_capacity(n_knots + 6);
        for _ in 0..3 {
            knots.push(lo);
        }
        knots.extend_from_slice(&simple);
        for _ in 0..3 {
            knots.push(hi);
        }

        let mut ata = vec![F::zero(); n_basis * n_basis];
        let mut aty = vec![F::zero(); n_basis];
        for (&xi, &yi) in x.iter().zip(y) {
            let span = span_index(&simple, lo, hi, xi);
            let b = basis_funs(&knots, span, xi);
            for r in 0..4 {
                let row = span - 3 + r;
                aty[row] = aty[row] + b[r] * yi;
                for c in 0..4 {
                    let col = span - 3 + c;
                    ata[row * n_basis + col] = ata[row * n_basis + col] + b[r] * b[c];
                }
            }
        }
        let coeffs = solve_dense(&mut ata, &mut aty).map_err(|e| match e {
            SolveError::Singular { .. } => SplineError::SingularSystem,
            SolveError::ShapeMismatch => unreachable!("square by construction"),
        })?;
        Ok(Self { knots, coeffs, lo, hi })
    }

    /// Evaluates the spline; arguments outside the fitted range clamp to it.
    pub fn eval(&self, u: F) -> F {
        let u = u.max(self.lo).min(self.hi);
        let n_simple = self.knots.len() - 6;
        let simple = &self.knots[3..3 + n_simple];
        let span = span_index(simple, self.lo, self.hi, u);
        let b = basis_funs(&self.knots, span, u);
        let mut acc = F::zero();
        for r in 0..4 {
            acc = acc + b[r] * self.coeffs[span - 3 + r];
        }
        acc
    }

    pub fn range(&self) -> (F, F) {
        (self.lo, self.hi)
    }
}

/// Index s into the full knot vector with knots[s] <= u < knots[s+1],
/// clamping u == hi into the last nonempty span.
fn span_index<F: Float>(simple: &[F], lo: F, hi: F, u: F) -> usize {
    debug_assert!(u >= lo && u <= hi);
    let m = simple.len();
    // interval index within the simple knots
    let mut i = match simple.iter().position(|&k| u < k) {
        Some(p) => p - 1,
        None => m - 2, // u >= last knot
    };
    if i > m - 2 {
        i = m - 2;
    }
    i + 3
}

/// Nonzero cubic basis function values at `u` for the given span
/// (The NURBS Book, algorithm A2.2, fixed degree 3).
fn basis_funs<F: Float>(knots: &[F], span: usize, u: F) -> [F; 4] {
    let mut n = [F::one(), F::zero(), F::zero(), F::zero()];
    let mut left = [F::zero(); 4];
    let mut right = [F::zero(); 4];
    for j in 1..=3 {
        left[j] = u - knots[span + 1 - j];
        right[j] = knots[span + j] - u;
        let mut saved = F::zero();
        for r in 0..j {
            let tmp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
    n
}
