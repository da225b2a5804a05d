use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ModelError, NcoreConfig, Network};
use crate::diffcore::{Checkpoint, Optimizer, Tape};
use crate::seeding::{self, Rng};
use crate::simcore::{TreatmentSet, Unit};

/// Supplies the minibatches of one training epoch as index lists into the
/// training units.
pub trait BatchSource {
    fn epoch_batches(&mut self, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>>;
}

/// Uniform shuffling into consecutive chunks.
#[derive(Clone, Debug)]
pub struct UniformBatches {
    n: usize,
}

impl UniformBatches {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl BatchSource for UniformBatches {
    fn epoch_batches(&mut self, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(rng);
        order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
    }
}

/// Per-feature and outcome standardisation fitted on the training units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
}

fn mean_and_scale(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 1e-12 { sd } else { 1.0 })
}

impl Standardizer {
    pub fn identity(p: usize) -> Self {
        Self { x_mean: vec![0.0; p], x_scale: vec![1.0; p], y_mean: 0.0, y_scale: 1.0 }
    }

    pub fn fit(units: &[Unit]) -> Result<Self, ModelError> {
        let first = units.first().ok_or(ModelError::EmptyDataset)?;
        let p = first.x.len();
        let (mut x_mean, mut x_scale) = (Vec::with_capacity(p), Vec::with_capacity(p));
        for i in 0..p {
            let (m, s) = mean_and_scale(units.iter().map(|u| u.x.0[i]));
            x_mean.push(m);
            x_scale.push(s);
        }
        let (y_mean, y_scale) = mean_and_scale(units.iter().map(|u| u.y_obs));
        Ok(Self { x_mean, x_scale, y_mean, y_scale })
    }

    pub fn transform_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.x_mean).zip(&self.x_scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn transform_y(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    pub fn inverse_y(&self, y: f64) -> f64 {
        y * self.y_scale + self.y_mean
    }
}

/// A network together with the standardisation of its inputs and outputs.
#[derive(Clone, Debug)]
pub struct NcoreModel {
    pub network: Network,
    pub scaler: Standardizer,
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    format: String,
    version: u32,
    config: NcoreConfig,
    scaler: Standardizer,
    params: Checkpoint,
}

const MODEL_FORMAT: &str = "combocf-ncore";

impl NcoreModel {
    /// Builds a fresh network for `config` and fits the scaler on `units`.
    pub fn new(config: &NcoreConfig, units: &[Unit]) -> Result<Self, ModelError> {
        Ok(Self { network: Network::build(config)?, scaler: Standardizer::fit(units)? })
    }

    pub fn config(&self) -> &NcoreConfig {
        self.network.config()
    }

    pub fn predict(&self, x: &[f64], t: TreatmentSet) -> Result<f64, ModelError> {
        let y = self.network.forward(&self.scaler.transform_x(x), t)?.y;
        Ok(self.scaler.inverse_y(y))
    }

    pub fn predict_all(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut all = self.network.predict_all_combinations(&self.scaler.transform_x(x))?;
        all.iter_mut().for_each(|y| *y = self.scaler.inverse_y(*y));
        Ok(all)
    }

    pub fn to_json(&self) -> String {
        let saved = SavedModel {
            format: MODEL_FORMAT.into(),
            version: 1,
            config: self.config().clone(),
            scaler: self.scaler.clone(),
            params: Checkpoint::from_store(self.network.params()),
        };
        serde_json::to_string_pretty(&saved).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let saved: SavedModel = serde_json::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        if saved.format != MODEL_FORMAT || saved.version != 1 {
            return Err(ModelError::Config(format!("unsupported model file {} v{}", saved.format, saved.version)));
        }
        let params = saved.params.to_store()?;
        Ok(Self { network: Network::from_params(&saved.config, params)?, scaler: saved.scaler })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean standardised training loss per completed epoch.
    pub loss_trace: Vec<f64>,
    /// Validation factual RMSE per epoch (empty without validation).
    pub val_trace: Vec<f64>,
    /// Epoch whose parameters were kept, when early stopping was active.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

fn factual_rmse(model: &NcoreModel, units: &[Unit]) -> Result<f64, ModelError> {
    let mut sse = 0.0;
    for u in units {
        let e = model.predict(&u.x.0, u.t_obs)? - u.y_obs;
        sse += e * e;
    }
    Ok((sse / units.len().max(1) as f64).sqrt())
}

/// Minimises factual mean squared error over the batches from `source`.
///
/// With a non-empty `validation` set and a configured patience, training stops
/// once validation factual RMSE has not improved for `patience` epochs and the
/// best parameters seen are restored.
pub fn train(
    model: &mut NcoreModel,
    units: &[Unit],
    source: &mut dyn BatchSource,
    validation: Option<&[Unit]>,
) -> Result<TrainReport, ModelError> {
    if units.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let config = model.config().clone();
    let xs: Vec<Vec<f64>> = units.iter().map(|u| model.scaler.transform_x(&u.x.0)).collect();
    let ys: Vec<f64> = units.iter().map(|u| model.scaler.transform_y(u.y_obs)).collect();
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate, config.weight_decay)?;
    let mut batch_rng = seeding::stream(config.seed, "ncore-batches", &[]);
    let mut dropout_rng = seeding::stream(config.seed, "ncore-dropout", &[]);
    let mut tape = Tape::new();

    let validation = validation.filter(|v| !v.is_empty());
    let patience = config.patience.filter(|_| validation.is_some());
    let mut report = TrainReport::default();
    let mut best: Option<(f64, Vec<f64>, usize)> = None;

    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        for batch in source.epoch_batches(config.batch_size, &mut batch_rng) {
            if batch.is_empty() {
                continue;
            }
            let scale = 1.0 / batch.len() as f64;
            let network = &mut model.network;
            network.params_mut().zero_grad();
            for &i in &batch {
                tape.clear();
                let out = network.record(&mut tape, &xs[i], units[i].t_obs, true, &mut dropout_rng)?;
                let se = tape.squared_error(out, &[ys[i]])?;
                let loss = tape.scale(se, scale)?;
                epoch_loss += tape.value(se)[0];
                tape.backward(loss, network.params_mut())?;
            }
            optimizer.step(network.params_mut());
        }
        epoch_loss /= units.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(ModelError::Diverged { epoch, loss: epoch_loss, config: format!("{config:?}") });
        }
        report.loss_trace.push(epoch_loss);

        if let (Some(val), Some(patience)) = (validation, patience) {
            let rmse = factual_rmse(model, val)?;
            report.val_trace.push(rmse);
            if !rmse.is_finite() {
                return Err(ModelError::Diverged { epoch, loss: rmse, config: format!("{config:?}") });
            }
            match &best {
                Some((b, _, _)) if rmse >= *b => {
                    let since = epoch - best.as_ref().map(|(_, _, e)| *e).unwrap_or(0);
                    if since >= patience {
                        report.stopped_early = true;
                        break;
                    }
                }
                _ => best = Some((rmse, model.network.params().flatten(), epoch)),
            }
        }
    }

    if let Some((_, params, epoch)) = best {
        model.network.params_mut().assign_flat(&params)?;
        report.best_epoch = Some(epoch);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Activation, OptimizerKind};
    use crate::simcore::CovariateVector;
    use rand::Rng as _;

    /// `y = w.x + sum_{j in T} c_j`, no interactions.
    fn linear_units(n: usize, k: usize, seed: u64) -> Vec<Unit> {
        let mut rng = seeding::stream(seed, "toy", &[]);
        let w = [0.8, -0.5, 0.3];
        let c = [1.0, -2.0, 0.5, 1.5];
        (0..n)
            .map(|i| {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mask = rng.random_range(1..(1u32 << k));
                let t = TreatmentSet::non_empty(mask, k).unwrap();
                let y = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + t.iter().map(|j| c[j]).sum::<f64>();
                Unit { id: i as u64, x: CovariateVector(x), t_obs: t, y_obs: y }
            })
            .collect()
    }

    fn linear_config(k: usize, epochs: usize) -> NcoreConfig {
        let mut cfg = NcoreConfig::new(k, 3);
        cfg.hidden = 8;
        cfg.base_layers = 1;
        cfg.activation = Activation::Linear;
        cfg.epochs = epochs;
        cfg.patience = None;
        cfg
    }

    fn mse(model: &NcoreModel, units: &[Unit]) -> f64 {
        factual_rmse(model, units).unwrap().powi(2)
    }

    #[test]
    fn fits_a_linear_generator() {
        let units = linear_units(500, 2, 1);
        let cfg = linear_config(2, 200);
        let mut model = NcoreModel::new(&cfg, &units).unwrap();
        let report = train(&mut model, &units, &mut UniformBatches::new(units.len()), None).unwrap();
        assert_eq!(report.loss_trace.len(), 200);
        assert!(report.val_trace.is_empty() && report.best_epoch.is_none());
        let m = mse(&model, &units);
        assert!(m < 0.05, "training mse {m}");
    }

    #[test]
    fn absent_arm_is_untouched() {
        let units: Vec<Unit> = linear_units(200, 4, 2)
            .into_iter()
            .filter_map(|mut u| {
                let mask = u.t_obs.mask() & !(1 << 3);
                u.t_obs = TreatmentSet::non_empty(mask, 4).ok()?;
                Some(u)
            })
            .collect();
        let mut cfg = linear_config(4, 5);
        cfg.weight_decay = 1e-4;
        let mut model = NcoreModel::new(&cfg, &units).unwrap();
        let before: Vec<Vec<f64>> = model.network.arm_param_ids(3).iter().map(|&id| model.network.params().value(id).to_vec()).collect();
        let others = model.network.params().flatten();
        train(&mut model, &units, &mut UniformBatches::new(units.len()), None).unwrap();
        let after: Vec<Vec<f64>> = model.network.arm_param_ids(3).iter().map(|&id| model.network.params().value(id).to_vec()).collect();
        assert_eq!(before, after);
        assert_ne!(others, model.network.params().flatten());
    }

    #[test]
    fn early_stopping_restores_best_parameters() {
        let units = linear_units(300, 2, 3);
        let (tr, va) = units.split_at(240);
        let mut cfg = linear_config(2, 400);
        cfg.patience = Some(5);
        cfg.learning_rate = 0.03;
        let mut model = NcoreModel::new(&cfg, tr).unwrap();
        let report = train(&mut model, tr, &mut UniformBatches::new(tr.len()), Some(va)).unwrap();
        let best = report.best_epoch.unwrap();
        let best_val = report.val_trace[best];
        assert!(report.val_trace.iter().all(|&v| v >= best_val));
        assert_eq!(factual_rmse(&model, va).unwrap(), best_val);
        if report.stopped_early {
            assert_eq!(report.val_trace.len(), best + 6);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let units = linear_units(100, 3, 4);
        let mut cfg = linear_config(3, 3);
        cfg.dropout = 0.25;
        cfg.activation = Activation::Relu;
        let run = || {
            let mut m = NcoreModel::new(&cfg, &units).unwrap();
            train(&mut m, &units, &mut UniformBatches::new(units.len()), None).unwrap();
            m.network.params().flatten()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_is_reported() {
        let units = linear_units(64, 2, 5);
        let mut cfg = linear_config(2, 50);
        cfg.optimizer = OptimizerKind::Sgd;
        cfg.learning_rate = 1e6;
        let mut model = NcoreModel::new(&cfg, &units).unwrap();
        let err = train(&mut model, &units, &mut UniformBatches::new(units.len()), None).unwrap_err();
        assert!(matches!(err, ModelError::Diverged { .. }), "{err}");
        assert!(matches!(train(&mut model, &[], &mut UniformBatches::new(0), None), Err(ModelError::EmptyDataset)));
    }

    #[test]
    fn model_file_roundtrip() {
        let units = linear_units(50, 2, 6);
        let mut model = NcoreModel::new(&linear_config(2, 2), &units).unwrap();
        train(&mut model, &units, &mut UniformBatches::new(units.len()), None).unwrap();
        let back = NcoreModel::from_json(&model.to_json()).unwrap();
        for u in &units {
            assert_eq!(back.predict_all(&u.x.0).unwrap(), model.predict_all(&u.x.0).unwrap());
        }
        assert!(NcoreModel::from_json("{}").is_err());
    }

    #[test]
    fn uniform_batches_partition_the_epoch() {
        let mut rng = seeding::stream(0, "b", &[]);
        let batches = UniformBatches::new(10).epoch_batches(4, &mut rng);
        assert_eq!(batches.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = batches.concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }
}
