//! Minimal reverse-mode differentiation over dense tensors.
//!
//! Double precision is the intended instantiation; everything is generic over
//! [`crate::scalar::Scalar`] so the same kernels also run in `f32`.

mod fd;
mod tape;
mod tensor;

pub use fd::{finite_difference_check, FdReport};
pub use tape::{NodeId, OpKind, Tape};
pub use tensor::{DiffError, Tensor};
