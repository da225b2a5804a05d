//! Minimal reverse-mode differentiation for affine/activation chains.
//!
//! Nodes are whole vectors rather than scalars: a [`Tape`] records affine
//! maps, elementwise activations, dropout masks, sums and squared errors in
//! evaluation order, and [`Tape::backward`] walks it in reverse, accumulating
//! parameter gradients into a [`ParamStore`]. A parameter that never appears
//! on the tape keeps a zero gradient and is not marked as touched, so the
//! optimizer leaves it alone.

mod checkpoint;
mod optim;
mod params;
mod tape;

pub use checkpoint::{Checkpoint, CheckpointEntry, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use optim::{Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use params::{Param, ParamId, ParamStore};
pub use tape::{affine_kernel, dropout, Activation, NodeId, Tape};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape { op: &'static str, expected: usize, got: usize },
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("node {0} is not on the tape")]
    UnknownNode(usize),
    #[error("loss node must be scalar, has {0} entries")]
    NonScalarLoss(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
