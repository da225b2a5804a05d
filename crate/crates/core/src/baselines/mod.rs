//! Composite per-combination regressors used as comparison points.
//!
//! A composite model fits one independent sub-model for every treatment
//! mask observed in training, plus a global sub-model on all units that
//! ignores treatments. Masks never seen in training are answered by a
//! configurable fallback.

mod composite;
mod knn;
mod ridge;

pub use composite::{composite_fit, BaseLearner, CompositeModel, FallbackPolicy, SubModel};
pub use knn::{knn_predict, KnnPoint};
pub use ridge::{ridge_fit, RidgeModel};

use thiserror::Error;

/// Ridge regularisation strengths searched by the tuner.
pub const RIDGE_C_CHOICES: [f64; 3] = [0.1, 1.0, 10.0];
/// Neighbour counts searched by the tuner.
pub const KNN_CHOICES: [usize; 5] = [1, 3, 5, 10, 20];
pub const DEFAULT_NEIGHBORS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("invalid baseline configuration: {0}")]
    Config(String),
    #[error("input has {got} features, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("no training data")]
    Empty,
    #[error("treatment set is empty")]
    EmptyTreatmentSet,
    #[error("mask {mask:#b} was not observed in training and no fallback applies")]
    Unseen { mask: u32 },
}
