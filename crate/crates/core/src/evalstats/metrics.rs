use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{bootstrap_ci, EvalError};
use crate::baselines::CompositeModel;
use crate::ncore::NcoreModel;
use crate::simcore::{OutcomeOracle, TreatmentSet, Unit};

/// Anything that predicts outcomes for every treatment set.
pub trait CounterfactualPredictor {
    fn predict(&self, x: &[f64], t: TreatmentSet) -> Result<f64, EvalError>;
    /// All `2^k - 1` predictions, entry `m - 1` for mask `m`.
    fn predict_all(&self, x: &[f64]) -> Result<Vec<f64>, EvalError>;
}

impl CounterfactualPredictor for NcoreModel {
    fn predict(&self, x: &[f64], t: TreatmentSet) -> Result<f64, EvalError> {
        NcoreModel::predict(self, x, t).map_err(|e| EvalError::Predict(e.to_string()))
    }

    fn predict_all(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        NcoreModel::predict_all(self, x).map_err(|e| EvalError::Predict(e.to_string()))
    }
}

impl CounterfactualPredictor for CompositeModel {
    fn predict(&self, x: &[f64], t: TreatmentSet) -> Result<f64, EvalError> {
        CompositeModel::predict(self, x, t).map_err(|e| EvalError::Predict(e.to_string()))
    }

    fn predict_all(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        CompositeModel::predict_all(self, x).map_err(|e| EvalError::Predict(e.to_string()))
    }
}

/// Ground-truth outcomes of a unit under every non-empty treatment set.
pub trait OutcomeSource {
    fn true_outcomes(&self, unit: &Unit) -> Vec<f64>;
}

impl OutcomeSource for OutcomeOracle {
    fn true_outcomes(&self, unit: &Unit) -> Vec<f64> {
        self.all_outcomes(&unit.x, unit.id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_resamples: usize,
    /// Mean squared error over all treatment sets, per test unit.
    #[serde(skip)]
    pub per_unit: Vec<f64>,
}

/// RMSE between true and predicted outcomes over every non-empty treatment
/// set of every unit, with a bootstrap interval over units.
pub fn counterfactual_rmse<P, O, R>(
    predictor: &P,
    oracle: &O,
    units: &[Unit],
    n_resamples: usize,
    rng: &mut R,
) -> Result<MetricReport, EvalError>
where
    P: CounterfactualPredictor + ?Sized,
    O: OutcomeSource + ?Sized,
    R: Rng + ?Sized,
{
    if units.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut per_unit = Vec::with_capacity(units.len());
    for u in units {
        let truth = oracle.true_outcomes(u);
        let pred = predictor.predict_all(&u.x.0)?;
        if pred.len() != truth.len() {
            return Err(EvalError::Shape { expected: truth.len(), got: pred.len() });
        }
        let sse: f64 = truth.iter().zip(&pred).map(|(y, p)| (y - p) * (y - p)).sum();
        per_unit.push(sse / truth.len() as f64);
    }
    let point = (per_unit.iter().sum::<f64>() / per_unit.len() as f64).sqrt();
    let (lower, upper) = bootstrap_ci(&per_unit, n_resamples, rng);
    Ok(MetricReport { point, lower, upper, n_resamples, per_unit })
}

/// RMSE of predictions for the observed treatment sets.
pub fn factual_rmse<P: CounterfactualPredictor + ?Sized>(predictor: &P, units: &[Unit]) -> Result<f64, EvalError> {
    if units.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sse = 0.0;
    for u in units {
        let e = predictor.predict(&u.x.0, u.t_obs)? - u.y_obs;
        sse += e * e;
    }
    Ok((sse / units.len() as f64).sqrt())
}
