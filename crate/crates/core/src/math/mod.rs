//! Scalar-generic numeric kernels: line fits, order statistics, splines.

mod portable;
mod regression;
mod solve;
mod spline;

pub use portable::{ln, sin, unit_half_open, unit_open_closed};
pub use regression::{ols, r_squared_of_line, theil_sen, LineFit, RegressionError};
pub use solve::{solve_dense, SolveError};
pub use spline::{CubicSpline, SplineError};

use crate::num::Float;

/// Median of a sample. Sorts in place; even lengths average the middle pair.
///
/// Returns `None` on an empty slice. Values must not be NaN.
pub fn median_in_place<F: Float>(vals: &mut [F]) -> Option<F> {
    if vals.is_empty() {
        return None;
    }
    vals.sort_unstable_by(|a, b| a.partial_cmp(b).expect("NaN in median input"));
    let mid = vals.len() / 2;
    Some(if vals.len() % 2 == 0 {
        let two = F::one() + F::one();
        (vals[mid - 1] + vals[mid]) / two
    } else {
        vals[mid]
    })
}

/// Spread of a sample after pruning `trim_frac` of the points off each tail.
///
/// The trim count is `floor(trim_frac * n)` per tail.
pub fn trimmed_spread<F: Float>(values: &[F], trim_frac: F) -> Option<F> {
    if values.len() < 2 {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("NaN in spread input"));
    let k = (trim_frac * F::from_usize(sorted.len())?).floor().to_usize()?;
    if 2 * k >= sorted.len() {
        return Some(F::zero());
    }
    Some(sorted[sorted.len() - 1 - k] - sorted[k])
}

/// `count` points evenly spaced over `[lo, hi]`, endpoints included.
pub fn linspace<F: Float>(lo: F, hi: F, count: usize) -> Vec<F> {
    assert!(count >= 2, "linspace needs at least two points");
    let step = (hi - lo) / F::from_usize(count - 1).unwrap();
    (0..count)
        .map(|i| {
            if i == count - 1 {
                hi
            } else {
                lo + step * F::from_usize(i).unwrap()
            }
        })
        .collect()
}
