//! Prediction accuracy metrics over paired scalar series.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metrics: series length mismatch: {pred} predictions vs {truth} targets")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("metrics: empty series")]
    Empty,
    #[error("metrics: coefficient of determination undefined: {0}")]
    Undefined(String),
    #[error("metrics: {0}")]
    Invalid(String),
}

fn check_pair<T: Scalar>(pred: &[T], truth: &[T]) -> Result<(), MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T, MetricsError> {
    check_pair(pred, truth)?;
    let n = T::from_f64(pred.len() as f64);
    let ss: T = pred
        .iter()
        .zip(truth)
        .map(|(&p, &y)| (p - y) * (p - y))
        .sum();
    Ok((ss / n).sqrt())
}

/// Mean absolute error.
pub fn mae<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T, MetricsError> {
    check_pair(pred, truth)?;
    let n = T::from_f64(pred.len() as f64);
    let sa: T = pred.iter().zip(truth).map(|(&p, &y)| (p - y).abs()).sum();
    Ok(sa / n)
}

/// Coefficient of determination, `1 − SS_res / SS_tot`, range `(-∞, 1]`.
/// Undefined (rejected) for constant targets or series shorter than two.
pub fn r2<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T, MetricsError> {
    check_pair(pred, truth)?;
    if pred.len() < 2 {
        return Err(MetricsError::Undefined(
            "need at least two samples".into(),
        ));
    }
    let n = T::from_f64(truth.len() as f64);
    let mean: T = truth.iter().copied().sum::<T>() / n;
    let ss_tot: T = truth.iter().map(|&y| (y - mean) * (y - mean)).sum();
    if !(ss_tot > T::zero()) {
        return Err(MetricsError::Undefined(
            "target variance is zero (constant series)".into(),
        ));
    }
    let ss_res: T = pred
        .iter()
        .zip(truth)
        .map(|(&p, &y)| (p - y) * (p - y))
        .sum();
    Ok(T::one() - ss_res / ss_tot)
}
