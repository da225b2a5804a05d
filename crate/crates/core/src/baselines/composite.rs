use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{knn_predict, ridge_fit, BaselineError, KnnPoint, RidgeModel};
use crate::simcore::{TreatmentSet, Unit};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaseLearner {
    Ridge { c: f64 },
    Knn { neighbors: usize },
}

/// How a mask never observed in training is answered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackPolicy {
    /// Sub-model of the observed mask at minimum Hamming distance, lowest
    /// mask on ties.
    HammingNearest,
    /// The global model fitted on all units.
    Global,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SubModel {
    Ridge(RidgeModel),
    Knn { neighbors: usize, points: Vec<KnnPoint> },
}

impl SubModel {
    fn fit(units: &[&Unit], learner: BaseLearner) -> Result<Self, BaselineError> {
        match learner {
            BaseLearner::Ridge { c } => {
                let xs: Vec<&[f64]> = units.iter().map(|u| u.x.as_slice()).collect();
                let y: Vec<f64> = units.iter().map(|u| u.y_obs).collect();
                Ok(SubModel::Ridge(ridge_fit(&xs, &y, c)?))
            }
            BaseLearner::Knn { neighbors } => {
                if neighbors == 0 {
                    return Err(BaselineError::Config("kNN needs at least one neighbour".into()));
                }
                let points = units.iter().map(|u| KnnPoint { id: u.id, x: u.x.0.clone(), y: u.y_obs }).collect();
                Ok(SubModel::Knn { neighbors, points })
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            SubModel::Ridge(m) => m.predict(x),
            SubModel::Knn { neighbors, points } => knn_predict(points, x, *neighbors),
        }
    }

    /// Number of training units the sub-model was fitted on (ridge keeps none).
    pub fn support(&self) -> Option<usize> {
        match self {
            SubModel::Ridge(_) => None,
            SubModel::Knn { points, .. } => Some(points.len()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeModel {
    k: usize,
    p: usize,
    learner: BaseLearner,
    fallback: FallbackPolicy,
    models: BTreeMap<u32, SubModel>,
    global: Option<SubModel>,
}

/// Fits one sub-model per observed mask and a global model on all units.
pub fn composite_fit(units: &[Unit], k: usize, learner: BaseLearner, fallback: FallbackPolicy) -> Result<CompositeModel, BaselineError> {
    let p = units.first().map_or(0, |u| u.x.len());
    let mut groups: BTreeMap<u32, Vec<&Unit>> = BTreeMap::new();
    for u in units {
        if u.x.len() != p {
            return Err(BaselineError::Dimension { expected: p, got: u.x.len() });
        }
        if u.t_obs.k() != k {
            return Err(BaselineError::Config(format!("unit {} has k={}, model has k={k}", u.id, u.t_obs.k())));
        }
        groups.entry(u.t_obs.mask()).or_default().push(u);
    }
    let models = groups.into_iter().map(|(m, g)| Ok((m, SubModel::fit(&g, learner)?))).collect::<Result<_, BaselineError>>()?;
    let global = if units.is_empty() { None } else { Some(SubModel::fit(&units.iter().collect::<Vec<_>>(), learner)?) };
    Ok(CompositeModel { k, p, learner, fallback, models, global })
}

impl CompositeModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn learner(&self) -> BaseLearner {
        self.learner
    }

    pub fn fallback(&self) -> FallbackPolicy {
        self.fallback
    }

    pub fn observed_masks(&self) -> impl Iterator<Item = u32> + '_ {
        self.models.keys().copied()
    }

    pub fn sub_model(&self, mask: u32) -> Option<&SubModel> {
        self.models.get(&mask)
    }

    pub fn global(&self) -> Option<&SubModel> {
        self.global.as_ref()
    }

    /// The sub-model answering queries for `mask`.
    pub fn resolve(&self, mask: u32) -> Result<&SubModel, BaselineError> {
        if let Some(m) = self.models.get(&mask) {
            return Ok(m);
        }
        let found = match self.fallback {
            FallbackPolicy::Global => self.global.as_ref(),
            FallbackPolicy::HammingNearest => self
                .models
                .iter()
                .min_by_key(|(&m, _)| ((m ^ mask).count_ones(), m))
                .map(|(_, sub)| sub),
        };
        found.ok_or(BaselineError::Unseen { mask })
    }

    pub fn predict(&self, x: &[f64], t: TreatmentSet) -> Result<f64, BaselineError> {
        if t.is_empty() {
            return Err(BaselineError::EmptyTreatmentSet);
        }
        if t.k() != self.k {
            return Err(BaselineError::Config(format!("treatment set has k={}, model has k={}", t.k(), self.k)));
        }
        if x.len() != self.p && self.global.is_some() {
            return Err(BaselineError::Dimension { expected: self.p, got: x.len() });
        }
        Ok(self.resolve(t.mask())?.predict(x))
    }

    /// Predictions for every non-empty mask, entry `m - 1` for mask `m`.
    pub fn predict_all(&self, x: &[f64]) -> Result<Vec<f64>, BaselineError> {
        TreatmentSet::all_non_empty(self.k).map(|t| self.predict(x, t)).collect()
    }
}
