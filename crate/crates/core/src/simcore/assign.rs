use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::distance::mixed_distance_unchecked;
use super::{CovariateSchema, CovariateVector, SimError, TreatmentSet, TREATMENT_COUNT_RATE};

/// Picks `k` archetypes uniformly with replacement from `population`.
pub fn select_archetypes<R: Rng + ?Sized>(
    population: &[CovariateVector],
    k: usize,
    rng: &mut R,
) -> Result<Vec<CovariateVector>, SimError> {
    if k == 0 {
        return Err(SimError::Config("k must be at least 1".into()));
    }
    if population.is_empty() {
        return Err(SimError::Config("archetype population is empty".into()));
    }
    Ok((0..k)
        .map(|_| population[rng.random_range(0..population.len())].clone())
        .collect())
}

/// `softmax(-kappa * d)` over distances; uniform when `kappa == 0`.
pub fn softmax_of_negated(distances: &[f64], kappa: f64) -> Vec<f64> {
    let logits: Vec<f64> = distances.iter().map(|d| -kappa * d).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-treatment selection weights for covariates `x`: nearer archetypes weigh more.
pub fn assignment_weights(
    x: &CovariateVector,
    archetypes: &[CovariateVector],
    kappa: f64,
    schema: &CovariateSchema,
) -> Result<Vec<f64>, SimError> {
    if !(kappa >= 0.0) {
        return Err(SimError::Config(format!("kappa must be non-negative, got {kappa}")));
    }
    if x.len() != schema.p {
        return Err(SimError::Dimension { expected: schema.p, got: x.len() });
    }
    let d: Vec<f64> = archetypes
        .iter()
        .map(|a| mixed_distance_unchecked(x.as_slice(), a.as_slice(), schema))
        .collect();
    Ok(softmax_of_negated(&d, kappa))
}

/// Draws the treatment count `min(Poisson(2) + 1, k)`.
pub fn draw_treatment_count<R: Rng + ?Sized>(k: usize, rng: &mut R) -> usize {
    let poisson = Poisson::new(TREATMENT_COUNT_RATE).expect("positive rate");
    let extra: f64 = poisson.sample(rng);
    (extra as usize + 1).min(k)
}

/// Weighted sampling of `m` distinct indices without replacement.
pub(crate) fn sample_without_replacement<R: Rng + ?Sized>(weights: &[f64], m: usize, rng: &mut R) -> u32 {
    let mut w = weights.to_vec();
    let mut mask = 0u32;
    for _ in 0..m.min(w.len()) {
        let total: f64 = w.iter().sum();
        let mut pick = None;
        if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            for (j, &wj) in w.iter().enumerate() {
                if wj <= 0.0 {
                    continue;
                }
                pick = Some(j);
                if u < wj {
                    break;
                }
                u -= wj;
            }
        }
        // all remaining mass underflowed: fall back to the lowest free index
        let j = pick.unwrap_or_else(|| (0..w.len()).find(|&j| mask & (1 << j) == 0).unwrap());
        mask |= 1 << j;
        w[j] = 0.0;
    }
    mask
}

/// Assigns a non-empty treatment set to a unit with covariates `x`.
///
/// The cardinality follows `min(Poisson(2) + 1, k)`; which treatments are
/// chosen follows the archetype-distance softmax weights.
pub fn assign_treatments<R: Rng + ?Sized>(
    x: &CovariateVector,
    archetypes: &[CovariateVector],
    kappa: f64,
    schema: &CovariateSchema,
    rng: &mut R,
) -> Result<TreatmentSet, SimError> {
    let k = archetypes.len();
    let weights = assignment_weights(x, archetypes, kappa, schema)?;
    let m = draw_treatment_count(k, rng);
    let mask = sample_without_replacement(&weights, m, rng);
    TreatmentSet::non_empty(mask, k)
}
