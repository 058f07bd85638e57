//! Clamped uniform B-spline grids and Cox–de Boor evaluation.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum KanError {
    #[error("invalid spline grid: {0}")]
    InvalidGrid(String),
    #[error("kan: dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("kan: non-finite output (parameter diagnostics: {0})")]
    NonFinite(String),
}

/// Uniform clamped B-spline grid on `[lo, hi]`.
///
/// `size` counts grid intervals, so a grid holds `size + degree` basis
/// functions; the first and last knot values repeat `degree + 1` times.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineGrid<T> {
    degree: usize,
    size: usize,
    lo: T,
    hi: T,
    knots: Vec<T>,
}

impl<T: Scalar> SplineGrid<T> {
    pub fn new(size: usize, degree: usize, lo: T, hi: T) -> Result<Self, KanError> {
        if !(lo < hi) {
            return Err(KanError::InvalidGrid(format!("lo {lo} must be < hi {hi}")));
        }
        if size == 0 {
            return Err(KanError::InvalidGrid("grid needs at least one interval".into()));
        }
        let h = (hi - lo) / T::from_f64(size as f64);
        let mut knots = Vec::with_capacity(size + 2 * degree + 1);
        for _ in 0..=degree {
            knots.push(lo);
        }
        for j in 1..size {
            knots.push(lo + h * T::from_f64(j as f64));
        }
        for _ in 0..=degree {
            knots.push(hi);
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(KanError::InvalidGrid("knots must be non-decreasing".into()));
        }
        Ok(Self {
            degree,
            size,
            lo,
            hi,
            knots,
        })
    }

    /// Default training grid: cubic, 8 intervals on `[-1, 1]`.
    pub fn default_unit() -> Self {
        Self::new(8, 3, T::from_f64(-1.0), T::from_f64(1.0)).expect("default grid is valid")
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    /// Number of basis functions (`size + degree`).
    pub fn basis_count(&self) -> usize {
        self.size + self.degree
    }

    fn scratch_len(&self) -> usize {
        self.knots.len() - 1
    }

    /// Degree-0 indicators of the containing knot interval; `x == hi` counts
    /// as belonging to the last non-empty interval.
    fn degree0_into(&self, x: T, out: &mut [T]) {
        for (i, slot) in out.iter_mut().enumerate() {
            let t0 = self.knots[i];
            let t1 = self.knots[i + 1];
            let inside = (t0 <= x && x < t1) || (x == self.hi && t0 < t1 && t1 == self.hi);
            *slot = if inside { T::one() } else { T::zero() };
        }
    }

    /// Evaluate all basis functions at `x` (clamped into `[lo, hi]`).
    pub fn basis(&self, x: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.basis_count()];
        self.basis_into(x, &mut out, &mut vec![T::zero(); self.scratch_len()]);
        out
    }

    /// No-allocation basis evaluation: `out` has `basis_count()` entries,
    /// `scratch` has `knots.len() - 1`.
    pub fn basis_into(&self, x: T, out: &mut [T], scratch: &mut [T]) {
        let x = self.clamp_input(x);
        self.triangle(x, scratch, self.degree);
        out.copy_from_slice(&scratch[..self.basis_count()]);
    }

    /// Derivatives of all basis functions at `x`. Inputs outside `[lo, hi]`
    /// sit in the clamped (constant) extension, so every derivative is 0.
    pub fn basis_derivative(&self, x: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.basis_count()];
        self.basis_derivative_into(x, &mut out, &mut vec![T::zero(); self.scratch_len()]);
        out
    }

    pub fn basis_derivative_into(&self, x: T, out: &mut [T], scratch: &mut [T]) {
        if x < self.lo || x > self.hi {
            out.fill(T::zero());
            return;
        }
        if self.degree == 0 {
            out.fill(T::zero());
            return;
        }
        // Lower-degree basis values, then the standard derivative identity.
        self.triangle(x, scratch, self.degree - 1);
        let k = T::from_f64(self.degree as f64);
        let d = self.degree;
        for (i, slot) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            let left_den = self.knots[i + d] - self.knots[i];
            if left_den > T::zero() {
                acc += scratch[i] * k / left_den;
            }
            let right_den = self.knots[i + d + 1] - self.knots[i + 1];
            if right_den > T::zero() {
                acc -= scratch[i + 1] * k / right_den;
            }
            *slot = acc;
        }
    }

    fn clamp_input(&self, x: T) -> T {
        x.max(self.lo).min(self.hi)
    }

    /// Cox–de Boor triangle up to `target` degree; `work[i]` holds
    /// `N_{i,target}(x)` for the leading entries afterwards.
    fn triangle(&self, x: T, work: &mut [T], target: usize) {
        self.degree0_into(x, work);
        for d in 1..=target {
            let valid = self.knots.len() - 1 - d;
            for i in 0..valid {
                let mut acc = T::zero();
                let left_den = self.knots[i + d] - self.knots[i];
                if left_den > T::zero() {
                    acc += work[i] * (x - self.knots[i]) / left_den;
                }
                let right_den = self.knots[i + d + 1] - self.knots[i + 1];
                if right_den > T::zero() {
                    acc += work[i + 1] * (self.knots[i + d + 1] - x) / right_den;
                }
                work[i] = acc;
            }
        }
    }
}
