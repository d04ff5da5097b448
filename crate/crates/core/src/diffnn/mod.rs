//! Reverse-mode differentiation, dense networks and Adam.

mod adam;
mod mlp;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use mlp::{Activation, Dense, Mlp, MlpVars};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("graph already consumed by a previous backward pass")]
    GraphConsumed,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid layer sizes {0:?}")]
    InvalidLayers(Vec<usize>),
    #[error("invalid optimizer settings: {0}")]
    InvalidOptimizer(String),
}
