//! Per-feature affine normalization onto the spline grid range `[-1, 1]`.


use crate::scalar::Scalar;

use super::grid::KanError;

/// Affine map per feature from training-set `[min, max]` onto `[-1, 1]`.
///
/// Values outside the fitted range map outside `[-1, 1]` and are clamped by
/// the spline grid downstream. A degenerate feature (`min == max`) maps to 0
/// with zero derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNormalizer<T> {
    min: Vec<T>,
    max: Vec<T>,
}

impl<T: Scalar> FeatureNormalizer<T> {
    pub fn from_bounds(min: Vec<T>, max: Vec<T>) -> Result<Self, KanError> {
        if min.len() != max.len() {
            return Err(KanError::DimensionMismatch {
                expected: min.len(),
                got: max.len(),
            });
        }
        if min.iter().zip(&max).any(|(lo, hi)| lo > hi) {
            return Err(KanError::InvalidGrid("feature min above max".into()));
        }
        Ok(Self { min, max })
    }

    /// Fit bounds from rows of feature vectors.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [T]>, width: usize) -> Self
    where
        T: 'a,
    {
        let mut min = vec![T::infinity(); width];
        let mut max = vec![T::neg_infinity(); width];
        let mut any = false;
        for row in rows {
            any = true;
            for i in 0..width {
                min[i] = min[i].min(row[i]);
                max[i] = max[i].max(row[i]);
            }
        }
        if !any {
            min = vec![T::zero(); width];
            max = vec![T::zero(); width];
        }
        Self { min, max }
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[T] {
        &self.min
    }

    pub fn max(&self) -> &[T] {
        &self.max
    }

    /// Normalized value of feature `i` (unclamped).
    #[inline]
    pub fn normalize(&self, i: usize, v: T) -> T {
        let span = self.max[i] - self.min[i];
        if span > T::zero() {
            T::from_f64(2.0) * (v - self.min[i]) / span - T::one()
        } else {
            T::zero()
        }
    }

    /// d(normalized)/d(raw) for feature `i`.
    #[inline]
    pub fn scale(&self, i: usize) -> T {
        let span = self.max[i] - self.min[i];
        if span > T::zero() {
            T::from_f64(2.0) / span
        } else {
            T::zero()
        }
    }

    pub fn normalize_vec(&self, raw: &[T]) -> Vec<T> {
        raw.iter()
            .enumerate()
            .map(|(i, &v)| self.normalize(i, v))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_bounds_to_unit_interval() {
        let n = FeatureNormalizer::from_bounds(vec![-2.0f64, 0.0], vec![2.0, 10.0]).unwrap();
        assert_eq!(n.normalize(0, -2.0), -1.0);
        assert_eq!(n.normalize(0, 2.0), 1.0);
        assert_eq!(n.normalize(1, 5.0), 0.0);
        assert!((n.scale(1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn degenerate_feature_maps_to_zero_with_zero_scale() {
        let n = FeatureNormalizer::from_bounds(vec![3.0f64], vec![3.0]).unwrap();
        assert_eq!(n.normalize(0, 3.0), 0.0);
        assert_eq!(n.normalize(0, 99.0), 0.0);
        assert_eq!(n.scale(0), 0.0);
    }

    #[test]
    fn fit_finds_min_max() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, -5.0], vec![3.0, 2.0], vec![2.0, 0.0]];
        let n = FeatureNormalizer::fit(rows.iter().map(|r| r.as_slice()), 2);
        assert_eq!(n.min(), &[1.0, -5.0]);
        assert_eq!(n.max(), &[3.0, 2.0]);
    }
}
