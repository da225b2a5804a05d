use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::distance::mixed_distance_unchecked;
use super::{
    CovariateSchema, CovariateVector, SimError, COMBO_DENSITY, COMBO_MEAN, COMBO_STD,
    MAX_INTERACTION_DEGREE, OUTCOME_STD, VIRAL_LOAD_MAX, VIRAL_LOAD_MIN,
};

/// Gaussian outcome model of one treatment applied alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub centroid: CovariateVector,
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Samples a model whose centroid is a uniformly chosen population member.
pub fn build_single_outcome_model<R: Rng + ?Sized>(
    population: &[CovariateVector],
    rng: &mut R,
) -> Result<OutcomeModel, SimError> {
    if population.is_empty() {
        return Err(SimError::Config("outcome-model population is empty".into()));
    }
    let l = rng.random_range(0..population.len());
    let mean = rng.random_range(VIRAL_LOAD_MIN..VIRAL_LOAD_MAX);
    Ok(OutcomeModel {
        centroid: population[l].clone(),
        mean,
        std: OUTCOME_STD,
        lower: VIRAL_LOAD_MIN,
        upper: VIRAL_LOAD_MAX,
    })
}

/// Normal(mean, std) conditioned on the open interval `(lower, upper)`, by rejection.
pub fn sample_truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64, lower: f64, upper: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let v = mean + std * z;
        if v > lower && v < upper {
            return v;
        }
    }
}

impl OutcomeModel {
    /// Unscaled draw, always inside `(lower, upper)`.
    pub fn draw_unscaled<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_truncated_normal(rng, self.mean, self.std, self.lower, self.upper)
    }
}

/// Outcome of a single treatment: a truncated-normal draw scaled by the
/// distance between `x` and the model centroid.
pub fn single_outcome<R: Rng + ?Sized>(
    model: &OutcomeModel,
    x: &CovariateVector,
    schema: &CovariateSchema,
    rng: &mut R,
) -> f64 {
    let unscaled = model.draw_unscaled(rng);
    unscaled * mixed_distance_unchecked(x.as_slice(), model.centroid.as_slice(), schema)
}

/// Sparse interaction coefficients for every subset of 2..=min(k, 5) treatments.
///
/// Each coefficient is active with probability 0.2; active coefficients of
/// order `d` follow `Normal(1.02^(d-1) * -0.03, 1.02^(d-2) * 0.015)`.
/// Keys are subset masks; single-treatment subsets are not stored.
pub fn sample_combo_coefficients<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<BTreeMap<u32, f64>, SimError> {
    if k == 0 || k > super::MAX_TREATMENTS {
        return Err(SimError::Config(format!("k must be in 1..={}, got {k}", super::MAX_TREATMENTS)));
    }
    let max_degree = k.min(MAX_INTERACTION_DEGREE) as u32;
    let mut out = BTreeMap::new();
    for mask in 1u32..(1u32 << k) {
        let degree = mask.count_ones();
        if degree < 2 || degree > max_degree {
            continue;
        }
        let active = rng.random::<f64>() < COMBO_DENSITY;
        let value = if active {
            let d = f64::from(degree);
            let law = Normal::new(1.02f64.powf(d - 1.0) * COMBO_MEAN, 1.02f64.powf(d - 2.0) * COMBO_STD)
                .expect("positive std");
            law.sample(rng)
        } else {
            0.0
        };
        out.insert(mask, value);
    }
    Ok(out)
}

/// Multilinear combination of single-treatment outcomes over the set `mask`.
///
/// `singles[j]` is the outcome of treatment `j` alone (entries outside `mask`
/// are ignored); `coefficient(o)` returns the interaction coefficient of
/// subset `o`. The result is the sum of the singles plus, for every subset of
/// size 2..=min(|mask|, 5) in ascending mask order, its coefficient times the
/// product of its members' outcomes.
pub fn combine_outcomes(singles: &[f64], mask: u32, coefficient: impl Fn(u32) -> f64) -> f64 {
    let mut total = 0.0;
    let mut rest = mask;
    while rest != 0 {
        let j = rest.trailing_zeros() as usize;
        total += singles[j];
        rest &= rest - 1;
    }
    let max_degree = (mask.count_ones() as usize).min(MAX_INTERACTION_DEGREE) as u32;
    if max_degree < 2 {
        return total;
    }
    // ascending enumeration of the submasks of `mask`
    let mut sub: u32 = 0;
    loop {
        sub = sub.wrapping_sub(mask) & mask;
        if sub == 0 {
            break;
        }
        let degree = sub.count_ones();
        if degree < 2 || degree > max_degree {
            continue;
        }
        let b = coefficient(sub);
        if b == 0.0 {
            continue;
        }
        let mut product = 1.0;
        let mut bits = sub;
        while bits != 0 {
            product *= singles[bits.trailing_zeros() as usize];
            bits &= bits - 1;
        }
        total += b * product;
    }
    total
}
