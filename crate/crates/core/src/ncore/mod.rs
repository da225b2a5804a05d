//! The branched counterfactual network.
//!
//! Shared base layers map covariates to a hidden representation `h_{}`.
//! Every treatment `t_j` owns an arm of affine interaction sublayers
//! `h -> W_j h + b_j`; for a treatment set `T` the arms of its members are
//! applied one after another in ascending treatment order, so
//! `h_T = W_j h_{T \ {j}} + b_j`. A shared linear head maps `h_T` to the
//! predicted outcome. Arms of treatments outside `T` never enter the
//! computation and therefore receive no gradient from that sample.

mod network;
mod train;

pub use network::{Network, Prediction};
pub use train::{train, BatchSource, NcoreModel, Standardizer, TrainReport, UniformBatches};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{Activation, DiffError, OptimizerKind};
use crate::simcore::MAX_TREATMENTS;

/// Hidden widths searched by the tuner.
pub const HIDDEN_CHOICES: [usize; 4] = [8, 16, 32, 64];
pub const LAYER_CHOICES: [usize; 3] = [1, 2, 3];
pub const BATCH_CHOICES: [usize; 4] = [16, 32, 64, 128];
pub const WEIGHT_DECAY_CHOICES: [f64; 3] = [0.0, 1e-5, 1e-4];
pub const LEARNING_RATE_CHOICES: [f64; 2] = [0.003, 0.03];
pub const DROPOUT_CHOICES: [f64; 4] = [0.0, 0.10, 0.15, 0.25];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input has {got} features, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("treatment set is empty")]
    EmptyTreatmentSet,
    #[error("treatment set has k={got}, model has k={expected}")]
    TreatmentCount { expected: usize, got: usize },
    #[error("cannot enumerate 2^{0} - 1 combinations (k must be <= 20)")]
    EnumerationBound(usize),
    #[error("training diverged at epoch {epoch} (loss {loss}); config: {config}")]
    Diverged { epoch: usize, loss: f64, config: String },
    #[error("training set is empty")]
    EmptyDataset,
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NcoreConfig {
    /// Number of base treatments.
    pub k: usize,
    /// Covariate dimension.
    pub p: usize,
    /// Hidden units per layer.
    pub hidden: usize,
    /// Shared base layers.
    pub base_layers: usize,
    /// Affine sublayers per treatment arm.
    pub arm_depth: usize,
    pub activation: Activation,
    /// Apply `activation` after each arm sublayer as well.
    pub arm_activation: bool,
    pub dropout: f64,
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Early-stopping patience in epochs; only used with a validation set.
    pub patience: Option<usize>,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl NcoreConfig {
    pub fn new(k: usize, p: usize) -> Self {
        Self {
            k,
            p,
            hidden: 32,
            base_layers: 2,
            arm_depth: 1,
            activation: Activation::Relu,
            arm_activation: false,
            dropout: 0.0,
            weight_decay: 0.0,
            learning_rate: 0.003,
            batch_size: 32,
            epochs: 300,
            patience: Some(30),
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.k == 0 || self.k > MAX_TREATMENTS {
            return err(format!("k must be in 1..={MAX_TREATMENTS}, got {}", self.k));
        }
        if self.p == 0 || self.hidden == 0 || self.base_layers == 0 || self.arm_depth == 0 {
            return err("p, hidden, base_layers and arm_depth must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.learning_rate > 0.0) {
            return err(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            return err(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return err("batch_size and epochs must be positive".into());
        }
        Ok(())
    }

    /// Whether every tuned hyperparameter lies on the search grid.
    pub fn on_search_grid(&self) -> bool {
        HIDDEN_CHOICES.contains(&self.hidden)
            && LAYER_CHOICES.contains(&self.base_layers)
            && BATCH_CHOICES.contains(&self.batch_size)
            && WEIGHT_DECAY_CHOICES.contains(&self.weight_decay)
            && LEARNING_RATE_CHOICES.contains(&self.learning_rate)
            && DROPOUT_CHOICES.contains(&self.dropout)
    }

    /// Scalar parameter count: base `p*N + N + (L-1)(N*N + N)`, arms
    /// `k * depth * (N*N + N)`, head `N + 1`.
    pub fn parameter_count(&self) -> usize {
        let n = self.hidden;
        let square = n * n + n;
        (self.p * n + n) + (self.base_layers - 1) * square + self.k * self.arm_depth * square + n + 1
    }
}
