//! Central finite-difference verification of analytic gradients.

use crate::scalar::Scalar;

use super::tensor::{DiffError, Tensor};

/// Result of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct FdReport<T> {
    /// max over coordinates of |analytic − central| / max(1, |analytic|)
    pub max_rel_error: T,
    /// Coordinate where the maximum occurred.
    pub worst_coord: usize,
}

/// Compare an analytic gradient against central differences of `f` at `x`.
///
/// The relative error at each coordinate is
/// `|analytic − central| / max(1, |analytic|)`; the maximum over coordinates
/// is returned. A non-finite evaluation of `f` is reported together with the
/// offending coordinate.
pub fn finite_difference_check<T, F>(
    mut f: F,
    x: &Tensor<T>,
    analytic_grad: &Tensor<T>,
    step: T,
) -> Result<FdReport<T>, DiffError>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> Result<T, DiffError>,
{
    if x.shape() != analytic_grad.shape() {
        return Err(DiffError::ShapeMismatch {
            op: "finite_difference_check",
            lhs: x.shape().to_vec(),
            rhs: analytic_grad.shape().to_vec(),
        });
    }
    let mut probe = x.clone();
    let mut max_rel_error = T::zero();
    let mut worst_coord = 0usize;
    let two = T::from_f64(2.0);
    for i in 0..x.numel() {
        let base = x.data()[i];
        probe.data_mut()[i] = base + step;
        let hi = f(&probe)?;
        probe.data_mut()[i] = base - step;
        let lo = f(&probe)?;
        probe.data_mut()[i] = base;
        if !hi.is_finite() || !lo.is_finite() {
            return Err(DiffError::NonFinite {
                context: "finite_difference_check: f(x ± step)".into(),
                index: i,
            });
        }
        let central = (hi - lo) / (two * step);
        let analytic = analytic_grad.data()[i];
        let rel = (analytic - central).abs() / T::one().max(analytic.abs());
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_coord = i;
        }
    }
    Ok(FdReport {
        max_rel_error,
        worst_coord,
    })
}
