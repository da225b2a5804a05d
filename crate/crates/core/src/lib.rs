//! Counterfactual outcome estimation for combinations of concurrent treatments.
//!
//! The crate is organised around the pieces of a full benchmark pipeline:
//!
//! - [`simcore`]: synthetic observational data with a ground-truth outcome oracle.
//! - [`diffcore`]: a small tape-based reverse-mode differentiation engine.
//! - [`ncore`]: the branched network with recursive per-treatment interaction arms.
//! - [`matching`]: PCA balancing scores and randomized balanced minibatches.
//! - [`baselines`]: composite per-combination ridge and kNN regressors.
//! - [`evalstats`]: RMSE metrics, bootstrap intervals, Mann-Whitney-Wilcoxon.
//! - [`harness`]: dataset I/O, stratified splits, random search, sweeps.
//!
//! Every stochastic site draws from a labelled sub-stream of one master seed
//! (see [`seeding`]), so runs are reproducible bit for bit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod diffcore;
pub mod evalstats;
pub mod harness;
pub mod matching;
pub mod ncore;
pub mod seeding;
pub mod simcore;

pub use simcore::{CovariateSchema, CovariateVector, Dataset, OutcomeOracle, TreatmentSet, Unit};
