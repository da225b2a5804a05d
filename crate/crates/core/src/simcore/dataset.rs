use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::assign::{assign_treatments, select_archetypes};
use super::distance::mixed_distance_unchecked;
use super::outcome::{build_single_outcome_model, combine_outcomes, sample_combo_coefficients, OutcomeModel};
use super::schema::gen_covariates;
use super::{CovariateSchema, CovariateVector, SimError, TreatmentSet, MAX_TREATMENTS};
use crate::seeding;

/// One observed unit: covariates, the treatment set it received and its factual outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: u64,
    pub x: CovariateVector,
    pub t_obs: TreatmentSet,
    pub y_obs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: CovariateSchema,
    pub k: usize,
    pub units: Vec<Unit>,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.schema.validate()?;
        if self.k == 0 || self.k > MAX_TREATMENTS {
            return Err(SimError::Config(format!("k must be in 1..={MAX_TREATMENTS}, got {}", self.k)));
        }
        let mut ids = HashSet::with_capacity(self.units.len());
        for u in &self.units {
            u.x.conforms(&self.schema)?;
            if u.t_obs.is_empty() {
                return Err(SimError::EmptyTreatmentSet);
            }
            if u.t_obs.k() != self.k {
                return Err(SimError::MaskOutOfRange { mask: u.t_obs.mask(), k: self.k });
            }
            if !u.y_obs.is_finite() {
                return Err(SimError::Config(format!("unit {} has non-finite outcome", u.id)));
            }
            if !ids.insert(u.id) {
                return Err(SimError::Config(format!("duplicate unit id {}", u.id)));
            }
        }
        Ok(())
    }

    /// A dataset sharing schema, k and seed but holding only `units`.
    pub fn with_units(&self, units: Vec<Unit>) -> Dataset {
        Dataset { schema: self.schema.clone(), k: self.k, units, seed: self.seed }
    }
}

/// Parameters of one simulated benchmark dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub k: usize,
    pub kappa: f64,
    pub schema: CovariateSchema,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { n: 1000, k: 6, kappa: 10.0, schema: CovariateSchema::hiv_default(), seed: 0 }
    }
}

/// Frozen generative state answering counterfactual queries for any `(unit, T)`.
#[derive(Clone, Debug)]
pub struct OutcomeOracle {
    schema: CovariateSchema,
    archetypes: Vec<CovariateVector>,
    models: Vec<OutcomeModel>,
    coefficients: BTreeMap<u32, f64>,
    dense: Vec<f64>,
    kappa: f64,
    seed: u64,
}

impl OutcomeOracle {
    pub fn from_parts(
        schema: CovariateSchema,
        archetypes: Vec<CovariateVector>,
        models: Vec<OutcomeModel>,
        coefficients: BTreeMap<u32, f64>,
        kappa: f64,
        seed: u64,
    ) -> Result<Self, SimError> {
        let k = models.len();
        if k == 0 || k > MAX_TREATMENTS {
            return Err(SimError::Config(format!("need 1..={MAX_TREATMENTS} outcome models, got {k}")));
        }
        if archetypes.len() != k {
            return Err(SimError::Config(format!("{} archetypes for {k} treatments", archetypes.len())));
        }
        let mut dense = vec![0.0; 1 << k];
        for (&mask, &b) in &coefficients {
            if mask >> k != 0 {
                return Err(SimError::MaskOutOfRange { mask, k });
            }
            dense[mask as usize] = b;
        }
        Ok(Self { schema, archetypes, models, coefficients, dense, kappa, seed })
    }

    pub fn k(&self) -> usize {
        self.models.len()
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    pub fn archetypes(&self) -> &[CovariateVector] {
        &self.archetypes
    }

    pub fn models(&self) -> &[OutcomeModel] {
        &self.models
    }

    pub fn coefficients(&self) -> &BTreeMap<u32, f64> {
        &self.coefficients
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Outcome of treatment `j` alone for unit `unit_id`; the noise draw is
    /// keyed by `(seed, unit_id, j)`.
    pub fn single_outcome(&self, x: &CovariateVector, unit_id: u64, j: usize) -> f64 {
        let model = &self.models[j];
        let mut rng = seeding::stream(self.seed, "single-outcome", &[unit_id, j as u64]);
        let unscaled = model.draw_unscaled(&mut rng);
        unscaled * mixed_distance_unchecked(x.as_slice(), model.centroid.as_slice(), &self.schema)
    }

    fn singles_for(&self, x: &CovariateVector, unit_id: u64, mask: u32) -> Vec<f64> {
        (0..self.k())
            .map(|j| if mask & (1 << j) != 0 { self.single_outcome(x, unit_id, j) } else { 0.0 })
            .collect()
    }

    pub fn combined_outcome(&self, x: &CovariateVector, unit_id: u64, t: TreatmentSet) -> Result<f64, SimError> {
        self.check_set(t)?;
        if x.len() != self.schema.p {
            return Err(SimError::Dimension { expected: self.schema.p, got: x.len() });
        }
        let singles = self.singles_for(x, unit_id, t.mask());
        Ok(combine_outcomes(&singles, t.mask(), |o| self.dense[o as usize]))
    }

    pub fn counterfactual_outcome(&self, unit: &Unit, t: TreatmentSet) -> Result<f64, SimError> {
        self.combined_outcome(&unit.x, unit.id, t)
    }

    /// Outcomes for every non-empty mask, entry `m - 1` for mask `m`.
    pub fn all_outcomes(&self, x: &CovariateVector, unit_id: u64) -> Vec<f64> {
        let full = (1u32 << self.k()) - 1;
        let singles = self.singles_for(x, unit_id, full);
        (1..=full).map(|m| combine_outcomes(&singles, m, |o| self.dense[o as usize])).collect()
    }

    fn check_set(&self, t: TreatmentSet) -> Result<(), SimError> {
        if t.is_empty() {
            return Err(SimError::EmptyTreatmentSet);
        }
        if t.k() != self.k() {
            return Err(SimError::MaskOutOfRange { mask: t.mask(), k: self.k() });
        }
        Ok(())
    }
}

/// Runs the full simulator: covariates, archetypes, outcome models,
/// interaction coefficients, biased assignment and factual outcomes.
pub fn generate_dataset(config: &SimConfig) -> Result<(Dataset, OutcomeOracle), SimError> {
    let SimConfig { n, k, kappa, ref schema, seed } = *config;
    if n == 0 {
        return Err(SimError::Config("n must be at least 1".into()));
    }
    if k == 0 || k > MAX_TREATMENTS {
        return Err(SimError::Config(format!("k must be in 1..={MAX_TREATMENTS}, got {k}")));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(SimError::Config(format!("kappa must be finite and non-negative, got {kappa}")));
    }
    schema.validate()?;

    let population = gen_covariates(schema, n, &mut seeding::stream(seed, "covariates", &[]))?;
    let archetypes = select_archetypes(&population, k, &mut seeding::stream(seed, "archetypes", &[]))?;
    let mut model_rng = seeding::stream(seed, "outcome-models", &[]);
    let models = (0..k)
        .map(|_| build_single_outcome_model(&population, &mut model_rng))
        .collect::<Result<Vec<_>, _>>()?;
    let coefficients = sample_combo_coefficients(k, &mut seeding::stream(seed, "interactions", &[]))?;
    let oracle = OutcomeOracle::from_parts(schema.clone(), archetypes, models, coefficients, kappa, seed)?;

    let units = population
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let id = i as u64;
            let mut rng = seeding::stream(seed, "assignment", &[id]);
            let t_obs = assign_treatments(&x, oracle.archetypes(), kappa, schema, &mut rng)?;
            let y_obs = oracle.combined_outcome(&x, id, t_obs)?;
            Ok(Unit { id, x, t_obs, y_obs })
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    Ok((Dataset { schema: schema.clone(), k, units, seed }, oracle))
}
