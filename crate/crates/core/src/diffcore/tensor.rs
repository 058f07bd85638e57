//! Dense row-major tensors over a generic scalar.

use thiserror::Error;

use crate::scalar::Scalar;

/// Errors raised by tensor construction and the tape.
#[derive(Debug, Error)]
pub enum DiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: shape {shape:?} does not hold {len} values")]
    ShapeLenMismatch {
        op: &'static str,
        shape: Vec<usize>,
        len: usize,
    },
    #[error("{context}: non-finite value at flat index {index}")]
    NonFinite { context: String, index: usize },
    #[error("backward requires a scalar output, got shape {shape:?}")]
    NonScalarBackward { shape: Vec<usize> },
    #[error("{op}: invalid argument: {what}")]
    InvalidArg { op: &'static str, what: String },
}

/// Dense tensor: a shape and row-major values.
///
/// Invariants: the product of the extents equals the value count, and every
/// value is finite. Both are checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self, DiffError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(DiffError::ShapeLenMismatch {
                op: "Tensor::new",
                shape,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(DiffError::NonFinite {
                context: "Tensor::new".into(),
                index,
            });
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(v: T) -> Self {
        Self::new(vec![1], vec![v]).expect("scalar tensor")
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); numel],
        }
    }

    pub fn filled(shape: Vec<usize>, v: T) -> Result<Self, DiffError> {
        let numel = shape.iter().product();
        Self::new(shape, vec![v; numel])
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, DiffError> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(DiffError::InvalidArg {
                op: "Tensor::from_rows",
                what: "ragged rows".into(),
            });
        }
        let data: Vec<T> = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), ncols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Single stored value of a scalar (numel-1) tensor.
    pub fn item(&self) -> Result<T, DiffError> {
        if self.numel() != 1 {
            return Err(DiffError::NonScalarBackward {
                shape: self.shape.clone(),
            });
        }
        Ok(self.data[0])
    }

    /// Value at a 2-d index; only meaningful for rank-2 tensors.
    pub fn at2(&self, r: usize, c: usize) -> T {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[r * self.shape[1] + c]
    }

    /// Reinterpret the same flat data under a new shape of equal size.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self, DiffError> {
        let numel: usize = shape.iter().product();
        if numel != self.data.len() {
            return Err(DiffError::ShapeLenMismatch {
                op: "Tensor::reshaped",
                shape,
                len: self.data.len(),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Construct without the finiteness check; used for gradient buffers
    /// that are validated by the caller.
    pub(crate) fn new_unvalidated(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
