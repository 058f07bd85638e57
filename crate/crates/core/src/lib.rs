//! Physics-constrained ground-reaction-force estimation toolkit.
//!
//! The crate generates inverse-dynamics-consistent synthetic biped walking
//! data, trains a structured force predictor (factorized inertia, learned
//! potential, sequence network, damped least-squares force recovery), and
//! provides the impact-reward and acoustic-metric machinery used to evaluate
//! quiet locomotion.
//!
//! All numeric modules are generic over [`scalar::Scalar`]; the `f64`
//! aliases below are the instantiation used by the trainer and CLI.

pub mod config;
pub mod diffcore;
pub mod dynamics;
pub mod kan;
pub mod linalg;
pub mod metrics;
pub mod predictor;
pub mod reward;
pub mod runs;
pub mod simgen;
pub mod trainer;
pub mod scalar;
pub mod seqnet;

pub use scalar::Scalar;

/// Dense `f64` tensor.
pub type Tensor64 = diffcore::Tensor<f64>;
/// Reverse-mode tape over `f64`.
pub type Tape64 = diffcore::Tape<f64>;
/// Spline grid over `f64`.
pub type SplineGrid64 = kan::SplineGrid<f64>;
/// Spline layer over `f64`.
pub type KanLayer64 = kan::KanLayer<f64>;
