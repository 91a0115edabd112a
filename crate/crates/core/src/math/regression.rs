//! Ordinary least squares and Theil-Sen line fits.

use thiserror::Error;

use super::median_in_place;
use crate::num::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit<F> {
    pub slope: F,
    pub intercept: F,
    /// Coefficient of determination of this line against the data.
    /// Can be negative for a non-least-squares line (Theil-Sen).
    pub r_squared: F,
}

impl<F: Float> LineFit<F> {
    pub fn predict(&self, x: F) -> F {
        self.slope * x + self.intercept
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegressionError {
    #[error("too few samples: got {got}, need {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("x values are degenerate (no spread)")]
    DegenerateX,
    #[error("x and y lengths differ ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
}

fn check_lengths<F>(x: &[F], y: &[F], need: usize) -> Result<(), RegressionError> {
    if x.len() != y.len() {
        return Err(RegressionError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < need {
        return Err(RegressionError::TooFewSamples { got: x.len(), need });
    }
    Ok(())
}

/// R² of an arbitrary line against the data, relative to the mean model.
///
/// Convention: zero total variance yields 1 when the residuals also vanish,
/// 0 otherwise.
pub fn r_squared_of_line<F: Float>(x: &[F], y: &[F], slope: F, intercept: F) -> F {
    let n = F::from_usize(x.len()).unwrap();
    let mean_y = y.iter().fold(F::zero(), |a, &v| a + v) / n;
    let mut ss_res = F::zero();
    let mut ss_tot = F::zero();
    for (&xi, &yi) in x.iter().zip(y) {
        let r = yi - (slope * xi + intercept);
        ss_res = ss_res + r * r;
        let d = yi - mean_y;
        ss_tot = ss_tot + d * d;
    }
    if ss_tot == F::zero() {
        if ss_res == F::zero() {
            F::one()
        } else {
            F::zero()
        }
    } else {
        F::one() - ss_res / ss_tot
    }
}

/// Least-squares line through `(x, y)`.
pub fn ols<F: Float>(x: &[F], y: &[F]) -> Result<LineFit<F>, RegressionError> {
    check_lengths(x, y, 2)?;
    let n = F::from_usize(x.len()).unwrap();
    let mean_x = x.iter().fold(F::zero(), |a, &v| a + v) / n;
    let mean_y = y.iter().fold(F::zero(), |a, &v| a + v) / n;
    let mut sxx = F::zero();
    let mut sxy = F::zero();
    for (&xi, &yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * (yi - mean_y);
    }
    if sxx == F::zero() {
        return Err(RegressionError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    Ok(LineFit { slope, intercept, r_squared: r_squared_of_line(x, y, slope, intercept) })
}

/// Theil-Sen estimator: slope is the median over all pairwise slopes,
/// intercept the median of `y_i - slope * x_i`.
///
/// Pairs with equal x are skipped. The pairwise enumeration is O(n²) by
/// construction; callers keep n at measurement-series scale (hundreds).
pub fn theil_sen<F: Float>(x: &[F], y: &[F]) -> Result<LineFit<F>, RegressionError> {
    check_lengths(x, y, 2)?;
    let mut slopes = Vec::with_capacity(x.len() * (x.len() - 1) / 2);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let dx = x[j] - x[i];
            if dx != F::zero() {
                slopes.push((y[j] - y[i]) / dx);
            }
        }
    }
    let slope = median_in_place(&mut slopes).ok_or(RegressionError::DegenerateX)?;
    let mut residuals: Vec<F> = x.iter().zip(y).map(|(&xi, &yi)| yi - slope * xi).collect();
    let intercept = median_in_place(&mut residuals).expect("nonempty by check_lengths");
    Ok(LineFit { slope, intercept, r_squared: r_squared_of_line(x, y, slope, intercept) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 250.0 * v + 3.0).collect();
        let fit = ols(&x, &y).unwrap();
        assert!((fit.slope - 250.0).abs() < 1e-9);
        assert!((fit.intercept - 3.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_degenerate_x() {
        let x = vec![2.0f64; 5];
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(ols(&x, &y).unwrap_err(), RegressionError::DegenerateX);
    }

    #[test]
    fn ols_constant_y_is_perfect_fit() {
        let x = vec![0.0f64, 1.0, 2.0];
        let y = vec![5.0f64, 5.0, 5.0];
        let fit = ols(&x, &y).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn theil_sen_ignores_outliers() {
        let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 0.01 * v).collect();
        // replace 10% with +500 spikes
        for i in [5usize, 15, 25, 35, 45] {
            y[i] += 500.0;
        }
        let fit = theil_sen(&x, &y).unwrap();
        assert!((fit.slope - 0.01).abs() < 0.0005, "slope {}", fit.slope);
    }

    #[test]
    fn theil_sen_f32_instantiation() {
        let x: Vec<f32> = (0..20).map(|i| i as f32).collect();
        let y: Vec<f32> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let fit = theil_sen(&x, &y).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-4);
    }
}
