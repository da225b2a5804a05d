use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use super::{fit_projector, BalancingProjector, MatchError};
use crate::ncore::BatchSource;
use crate::seeding;
use crate::simcore::Unit;

/// A pool entry: unit id (for tie-breaking), observed mask and balancing score.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredUnit {
    pub id: u64,
    pub mask: u32,
    pub score: Vec<f64>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Draws successive balanced batches from a shrinking pool.
///
/// Remaining units are bucketed by observed mask so the nearest-match search
/// only scans units of the drawn combination.
#[derive(Clone, Debug)]
pub struct Matcher<'a> {
    pool: &'a [ScoredUnit],
    alive: Vec<bool>,
    buckets: BTreeMap<u32, Vec<usize>>,
    remaining: usize,
}

impl<'a> Matcher<'a> {
    pub fn new(pool: &'a [ScoredUnit]) -> Self {
        let mut buckets: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, u) in pool.iter().enumerate() {
            buckets.entry(u.mask).or_default().push(i);
        }
        Self { pool, alive: vec![true; pool.len()], buckets, remaining: pool.len() }
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    fn take(&mut self, i: usize) {
        let mask = self.pool[i].mask;
        let bucket = self.buckets.get_mut(&mask).expect("live unit has a bucket");
        let at = bucket.iter().position(|&j| j == i).expect("live unit is bucketed");
        bucket.swap_remove(at);
        if bucket.is_empty() {
            self.buckets.remove(&mask);
        }
        self.alive[i] = false;
        self.remaining -= 1;
    }

    /// Remaining unit of `mask` nearest to `centroid`, lowest id on ties.
    fn nearest(&self, mask: u32, centroid: &[f64]) -> usize {
        let mut best: Option<(f64, u64, usize)> = None;
        for &i in &self.buckets[&mask] {
            let u = &self.pool[i];
            let d = squared_distance(&u.score, centroid);
            if best.is_none_or(|(bd, bid, _)| d < bd || (d == bd && u.id < bid)) {
                best = Some((d, u.id, i));
            }
        }
        best.expect("bucket is non-empty").2
    }

    /// Builds one batch of up to `s` units, returned as pool indices in
    /// insertion order.
    pub fn next_batch<R: Rng + ?Sized>(&mut self, s: usize, rng: &mut R) -> Result<Vec<usize>, MatchError> {
        if self.remaining == 0 {
            return Err(MatchError::EmptyPool);
        }
        if s == 0 {
            return Err(MatchError::Config("a batch size of at least 1".into()));
        }
        let r = rng.random_range(0..self.remaining);
        let seed = self.alive.iter().enumerate().filter(|(_, &a)| a).nth(r).map(|(i, _)| i).expect("r < remaining");
        self.take(seed);
        let mut batch = vec![seed];
        let mut sum = self.pool[seed].score.clone();
        let mut centroid = sum.clone();
        let mut represented = BTreeSet::from([self.pool[seed].mask]);
        while batch.len() < s && self.remaining > 0 {
            let mut candidates: Vec<u32> = self.buckets.keys().copied().filter(|m| !represented.contains(m)).collect();
            if candidates.is_empty() {
                represented.clear();
                candidates = self.buckets.keys().copied().collect();
            }
            let mask = candidates[rng.random_range(0..candidates.len())];
            let pick = self.nearest(mask, &centroid);
            self.take(pick);
            batch.push(pick);
            represented.insert(mask);
            for (acc, v) in sum.iter_mut().zip(&self.pool[pick].score) {
                *acc += v;
            }
            let n = batch.len() as f64;
            centroid.iter_mut().zip(&sum).for_each(|(c, s)| *c = s / n);
        }
        Ok(batch)
    }
}

/// One balanced batch of up to `s` units drawn from the whole `pool`.
pub fn build_balanced_batch<R: Rng + ?Sized>(pool: &[ScoredUnit], s: usize, rng: &mut R) -> Result<Vec<usize>, MatchError> {
    Matcher::new(pool).next_batch(s, rng)
}

/// Batch source that partitions every epoch into successive balanced batches.
#[derive(Clone, Debug)]
pub struct BalancedBatches {
    pool: Vec<ScoredUnit>,
}

impl BalancedBatches {
    pub fn new(units: &[Unit], projector: &BalancingProjector) -> Result<Self, MatchError> {
        let pool = units
            .iter()
            .map(|u| Ok(ScoredUnit { id: u.id, mask: u.t_obs.mask(), score: projector.project(&u.x.0)? }))
            .collect::<Result<_, MatchError>>()?;
        Ok(Self { pool })
    }

    /// Fits a `d`-dimensional projector (capped at `p`) on `units` themselves.
    pub fn fit(units: &[Unit], d: usize) -> Result<Self, MatchError> {
        let xs: Vec<&[f64]> = units.iter().map(|u| u.x.as_slice()).collect();
        let p = xs.first().map_or(0, |x| x.len());
        let projector = fit_projector(&xs, d.min(p).max(1))?;
        Self::new(units, &projector)
    }

    pub fn pool(&self) -> &[ScoredUnit] {
        &self.pool
    }
}

impl BatchSource for BalancedBatches {
    fn epoch_batches(&mut self, batch_size: usize, rng: &mut seeding::Rng) -> Vec<Vec<usize>> {
        let mut matcher = Matcher::new(&self.pool);
        let mut out = Vec::new();
        while matcher.remaining() > 0 {
            out.push(matcher.next_batch(batch_size.max(1), rng).expect("pool is non-empty"));
        }
        out
    }
}
