//! Balancing scores and randomised approximately balanced minibatches.
//!
//! Covariates are reduced to a low-dimensional balancing score with PCA.
//! Batches are then grown one unit at a time: each step draws a treatment
//! combination not yet in the batch and adds the remaining unit of that
//! combination whose score lies closest to the batch centroid.

mod batch;
mod pca;

pub use batch::{build_balanced_batch, BalancedBatches, Matcher, ScoredUnit};
pub use pca::{fit_projector, BalancingProjector};

use thiserror::Error;

/// Default balancing-score dimension.
pub const DEFAULT_SCORE_DIM: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("balancing score needs {0}")]
    Config(String),
    #[error("covariates have zero variance; no principal axes exist")]
    Degenerate,
    #[error("input has {got} features, projector expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("matching pool is empty")]
    EmptyPool,
    #[error("projector checkpoint: {0}")]
    Checkpoint(String),
}
