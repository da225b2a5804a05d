use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{HarnessError, Method, Result, TrainingSettings};
use crate::baselines::{composite_fit, BaseLearner, CompositeModel, FallbackPolicy, KNN_CHOICES, RIDGE_C_CHOICES};
use crate::evalstats::{factual_rmse, CounterfactualPredictor, EvalError, MetricReport};
use crate::matching::BalancedBatches;
use crate::ncore::{
    self, NcoreConfig, NcoreModel, UniformBatches, BATCH_CHOICES, DROPOUT_CHOICES, HIDDEN_CHOICES, LAYER_CHOICES,
    LEARNING_RATE_CHOICES, WEIGHT_DECAY_CHOICES,
};
use crate::seeding;
use crate::simcore::{TreatmentSet, Unit};

/// One draw from a method's search space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "lowercase")]
pub enum HyperParams {
    Ncore { hidden: usize, layers: usize, batch_size: usize, weight_decay: f64, learning_rate: f64, dropout: f64 },
    Ridge { c: f64 },
    Knn { neighbors: usize },
}

/// Draws every hyperparameter uniformly from its choice list.
pub fn sample_hyperparams<R: Rng + ?Sized>(method: Method, rng: &mut R) -> HyperParams {
    match method {
        Method::Ncore | Method::NcoreBalanced => HyperParams::Ncore {
            hidden: *HIDDEN_CHOICES.choose(rng).unwrap(),
            layers: *LAYER_CHOICES.choose(rng).unwrap(),
            batch_size: *BATCH_CHOICES.choose(rng).unwrap(),
            weight_decay: *WEIGHT_DECAY_CHOICES.choose(rng).unwrap(),
            learning_rate: *LEARNING_RATE_CHOICES.choose(rng).unwrap(),
            dropout: *DROPOUT_CHOICES.choose(rng).unwrap(),
        },
        Method::Ridge | Method::RidgeHamming => HyperParams::Ridge { c: *RIDGE_C_CHOICES.choose(rng).unwrap() },
        Method::Knn => HyperParams::Knn { neighbors: *KNN_CHOICES.choose(rng).unwrap() },
    }
}

/// Stream label for the search space a method samples from; both network
/// variants share it so they see identical draws.
fn family(method: Method) -> &'static str {
    match method {
        Method::Ncore | Method::NcoreBalanced => "hpo-ncore",
        Method::Ridge | Method::RidgeHamming => "hpo-ridge",
        Method::Knn => "hpo-knn",
    }
}

#[derive(Clone, Debug)]
pub enum FittedModel {
    Ncore(NcoreModel),
    Composite(CompositeModel),
}

impl CounterfactualPredictor for FittedModel {
    fn predict(&self, x: &[f64], t: TreatmentSet) -> Result<f64, EvalError> {
        match self {
            FittedModel::Ncore(m) => CounterfactualPredictor::predict(m, x, t),
            FittedModel::Composite(m) => CounterfactualPredictor::predict(m, x, t),
        }
    }

    fn predict_all(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        match self {
            FittedModel::Ncore(m) => CounterfactualPredictor::predict_all(m, x),
            FittedModel::Composite(m) => CounterfactualPredictor::predict_all(m, x),
        }
    }
}

/// Network configuration for sampled hyperparameters and fixed settings.
pub fn ncore_config(hp: &HyperParams, k: usize, p: usize, settings: &TrainingSettings, seed: u64) -> Result<NcoreConfig> {
    let HyperParams::Ncore { hidden, layers, batch_size, weight_decay, learning_rate, dropout } = *hp else {
        return Err(HarnessError::Config(format!("{hp:?} are not network hyperparameters")));
    };
    let mut c = NcoreConfig::new(k, p);
    c.hidden = hidden;
    c.base_layers = layers;
    c.arm_depth = if settings.arm_depth == 0 { layers } else { settings.arm_depth };
    c.arm_activation = settings.arm_activation;
    c.batch_size = batch_size;
    c.weight_decay = weight_decay;
    c.learning_rate = learning_rate;
    c.dropout = dropout;
    c.epochs = settings.epochs;
    c.patience = Some(settings.patience);
    c.optimizer = settings.optimizer;
    c.seed = seed;
    c.validate()?;
    Ok(c)
}

/// Trains `method` with fixed hyperparameters; `val` drives early stopping
/// for the networks.
pub fn fit_method(
    method: Method,
    hp: &HyperParams,
    train: &[Unit],
    val: &[Unit],
    k: usize,
    settings: &TrainingSettings,
    seed: u64,
) -> Result<FittedModel> {
    let p = train.first().ok_or(HarnessError::Config("training fold is empty".into()))?.x.len();
    let learner = match (method, hp) {
        (Method::Ncore | Method::NcoreBalanced, _) => {
            let config = ncore_config(hp, k, p, settings, seed)?;
            let mut model = NcoreModel::new(&config, train)?;
            if method == Method::NcoreBalanced {
                let mut source = BalancedBatches::fit(train, settings.score_dim)?;
                ncore::train(&mut model, train, &mut source, Some(val))?;
            } else {
                ncore::train(&mut model, train, &mut UniformBatches::new(train.len()), Some(val))?;
            }
            return Ok(FittedModel::Ncore(model));
        }
        (Method::Ridge | Method::RidgeHamming, HyperParams::Ridge { c }) => BaseLearner::Ridge { c: *c },
        (Method::Knn, HyperParams::Knn { neighbors }) => BaseLearner::Knn { neighbors: *neighbors },
        _ => return Err(HarnessError::Config(format!("{hp:?} do not apply to {method}"))),
    };
    let fallback = if method == Method::Ridge { FallbackPolicy::Global } else { FallbackPolicy::HammingNearest };
    Ok(FittedModel::Composite(composite_fit(train, k, learner, fallback)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub method: Method,
    pub seed: u64,
    pub trial: usize,
    pub hyperparams: HyperParams,
    /// Validation factual RMSE; `None` when the run failed.
    pub val_rmse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<MetricReport>,
    /// Kept out of serialised records so result files stay byte-identical.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Clone, Debug)]
pub struct HpoOutcome {
    pub best: RunRecord,
    pub model: FittedModel,
    pub records: Vec<RunRecord>,
}

/// Random search over the method's hyperparameter grid, selecting the run
/// with the lowest validation factual RMSE (earliest run on ties). Only the
/// training and validation folds are visible here.
#[allow(clippy::too_many_arguments)]
pub fn hpo_search(
    method: Method,
    train: &[Unit],
    val: &[Unit],
    k: usize,
    budget: usize,
    settings: &TrainingSettings,
    seed: u64,
    config_hash: &str,
) -> Result<HpoOutcome> {
    if budget == 0 {
        return Err(HarnessError::Config("tuning budget must be at least 1".into()));
    }
    let mut records = Vec::with_capacity(budget);
    let mut best: Option<(f64, usize, FittedModel)> = None;
    for trial in 0..budget {
        let hp = sample_hyperparams(method, &mut seeding::stream(seed, family(method), &[trial as u64]));
        let init_seed = seeding::derive_seed(seed, "hpo-init", &[trial as u64]);
        let start = Instant::now();
        let fitted = fit_method(method, &hp, train, val, k, settings, init_seed)
            .and_then(|m| Ok((factual_rmse(&m, val)?, m)));
        let mut record = RunRecord {
            config_hash: config_hash.to_string(),
            method,
            seed,
            trial,
            hyperparams: hp,
            val_rmse: None,
            error: None,
            test: None,
            wall_time: Duration::ZERO,
        };
        match fitted {
            Ok((rmse, model)) if rmse.is_finite() => {
                record.val_rmse = Some(rmse);
                if best.as_ref().is_none_or(|(b, _, _)| rmse < *b) {
                    best = Some((rmse, trial, model));
                }
            }
            Ok((rmse, _)) => record.error = Some(format!("non-finite validation RMSE {rmse}")),
            Err(e @ (HarnessError::Model(_) | HarnessError::Match(_) | HarnessError::Baseline(_) | HarnessError::Eval(_))) => {
                record.error = Some(e.to_string())
            }
            Err(e) => return Err(e),
        }
        record.wall_time = start.elapsed();
        records.push(record);
    }
    match best {
        Some((_, trial, model)) => Ok(HpoOutcome { best: records[trial].clone(), model, records }),
        None => Err(HarnessError::SearchFailed(
            records.iter().map(|r| format!("  trial {}: {:?}: {}", r.trial, r.hyperparams, r.error.as_deref().unwrap_or("?"))).collect::<Vec<_>>().join("\n"),
        )),
    }
}
