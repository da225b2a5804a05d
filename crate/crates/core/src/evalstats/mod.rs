//! Evaluation metrics and the statistics used to compare methods.

mod bootstrap;
mod metrics;
mod mww;

pub use bootstrap::{bootstrap_ci, bootstrap_ci_with, percentile, DEFAULT_RESAMPLES};
pub use metrics::{counterfactual_rmse, factual_rmse, CounterfactualPredictor, MetricReport, OutcomeSource};
pub use mww::{mww_exact_p, mww_normal_p, mww_test, MwwResult, EXACT_LIMIT};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    Empty,
    #[error("prediction failed: {0}")]
    Predict(String),
    #[error("outcome vector has {got} entries, expected {expected}")]
    Shape { expected: usize, got: usize },
}
