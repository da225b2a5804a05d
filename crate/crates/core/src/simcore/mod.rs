//! Synthetic combination-treatment observational data.
//!
//! Generation runs in stages: covariates from a parametric schema, one
//! archetype per treatment, covariate-biased treatment assignment, a
//! truncated-Gaussian outcome model per treatment, and sparse polynomial
//! interaction coefficients that combine single-treatment outcomes. The
//! [`OutcomeOracle`] keeps the frozen generative state so any counterfactual
//! `(unit, T)` can be queried after the fact.

mod assign;
mod dataset;
mod distance;
mod outcome;
mod schema;
mod treatment;

pub use assign::{assign_treatments, assignment_weights, select_archetypes};
pub use dataset::{generate_dataset, Dataset, OutcomeOracle, SimConfig, Unit};
pub use distance::mixed_distance;
pub use outcome::{
    build_single_outcome_model, combine_outcomes, sample_combo_coefficients,
    sample_truncated_normal, single_outcome, OutcomeModel,
};
pub use schema::{gen_covariates, CovariateSchema, CovariateVector};
pub use treatment::TreatmentSet;

use thiserror::Error;

/// Lower truncation bound of unscaled single-treatment outcomes (initial viral load).
pub const VIRAL_LOAD_MIN: f64 = 0.84;
/// Upper truncation bound of unscaled single-treatment outcomes.
pub const VIRAL_LOAD_MAX: f64 = 7.69;
/// Standard deviation of every single-treatment outcome model.
pub const OUTCOME_STD: f64 = 0.5;
/// Mean of the interaction coefficient law before degree scaling.
pub const COMBO_MEAN: f64 = -0.03;
/// Standard deviation of the interaction coefficient law before degree scaling.
pub const COMBO_STD: f64 = 0.015;
/// Probability that an interaction coefficient is active.
pub const COMBO_DENSITY: f64 = 0.2;
/// Highest interaction order.
pub const MAX_INTERACTION_DEGREE: usize = 5;
/// Rate of the Poisson component of the treatment-count law.
pub const TREATMENT_COUNT_RATE: f64 = 2.0;
/// Enumeration bound on the number of base treatments.
pub const MAX_TREATMENTS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid covariate schema: {0}")]
    Schema(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty treatment set")]
    EmptyTreatmentSet,
    #[error("treatment mask {mask:#b} outside of k={k}")]
    MaskOutOfRange { mask: u32, k: usize },
}
