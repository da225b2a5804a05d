//! Experiment plumbing: configuration, dataset files, stratified splits,
//! random hyperparameter search, benchmarks and parameter sweeps.

mod bench;
mod config;
mod hpo;
mod io;
mod split;
mod sweep;

pub use bench::{run_benchmark, run_replicate, write_benchmark, AccessLog, BenchmarkReport, Comparison, Fold, MethodSummary, Phase, ReplicateResult};
pub use config::{
    config_hash, CiMode, DatasetSpec, ExperimentConfig, Method, SchemaSpec, SweepAxis, SweepSpec, TrainingSettings,
};
pub use hpo::{fit_method, hpo_search, sample_hyperparams, FittedModel, HpoOutcome, HyperParams, RunRecord};
pub use io::{load_dataset, load_model, read_sidecar, save_model, sidecar_path, write_dataset, write_truth, GeneratorInfo, Sidecar};
pub use split::{split_dataset, Split};
pub use sweep::{run_sweep, summarize_sweep, write_sweep_csv, SweepRow, SweepSummary};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::evalstats::EvalError;
use crate::matching::MatchError;
use crate::ncore::ModelError;
use crate::simcore::SimError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("every tuning run failed:\n{0}")]
    SearchFailed(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn data(path: &Path, message: impl Into<String>) -> Self {
        HarnessError::Data { path: path.to_path_buf(), message: message.into() }
    }

    /// Process exit code: 1 usage, 2 data, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Data { .. } | HarnessError::Sim(_) => 2,
            HarnessError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
