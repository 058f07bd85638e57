//! B-spline-parameterized layers with analytic input derivatives.

mod grid;
mod layer;
mod norm;

pub use grid::{KanError, SplineGrid};
pub use layer::{
    tape_forward, tape_input_derivative, KanDesign, KanLayer, KanLayerNodes, KanStack,
};
pub use norm::FeatureNormalizer;
