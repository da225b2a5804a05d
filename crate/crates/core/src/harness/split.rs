use rand::seq::SliceRandom;
use rand::Rng;

use super::{HarnessError, Result};
use crate::simcore::Unit;

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<Unit>,
    pub val: Vec<Unit>,
    pub test: Vec<Unit>,
}

/// Fold capacities by largest remainder: floors of `ratio * n`, then the
/// leftover units go to the largest fractional parts (earlier fold on ties).
fn capacities(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut caps = [0usize; 3];
    for (c, e) in caps.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = n - caps.iter().sum::<usize>();
    for &f in order.iter().cycle() {
        if left == 0 {
            break;
        }
        caps[f] += 1;
        left -= 1;
    }
    caps
}

/// Iterative multi-label stratification on the treatment indicators.
///
/// Repeatedly takes the label with the fewest unassigned units and hands each
/// of its units to the fold with the greatest remaining demand for that
/// label. Ties go to the fold with more free capacity, then at random. Full
/// folds are never chosen, so fold sizes hit their targets exactly.
pub fn split_dataset<R: Rng + ?Sized>(units: &[Unit], k: usize, ratios: [f64; 3], rng: &mut R) -> Result<Split> {
    let n = units.len();
    if n < 10 {
        return Err(HarnessError::Config(format!("splitting needs at least 10 units, got {n}")));
    }
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(HarnessError::Config(format!("split ratios must be non-negative and sum to 1, got {ratios:?}")));
    }
    let mut free = capacities(n, &ratios);
    let mut demand: Vec<[f64; 3]> = (0..k)
        .map(|j| {
            let count = units.iter().filter(|u| u.t_obs.contains(j)).count() as f64;
            [ratios[0] * count, ratios[1] * count, ratios[2] * count]
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold_of: Vec<Option<usize>> = vec![None; n];
    let mut remaining = n;

    let place = |i: usize, label: Option<usize>, free: &mut [usize; 3], demand: &mut Vec<[f64; 3]>, rng: &mut R| {
        let score = |f: usize| label.map_or(0.0, |l| demand[l][f]);
        let open: Vec<usize> = (0..3).filter(|&f| free[f] > 0).collect();
        let best = open.iter().map(|&f| score(f)).fold(f64::NEG_INFINITY, f64::max);
        let top: Vec<usize> = open.iter().copied().filter(|&f| score(f) == best).collect();
        let room = top.iter().map(|&f| free[f]).max().expect("a fold has room");
        let tied: Vec<usize> = top.into_iter().filter(|&f| free[f] == room).collect();
        let f = tied[rng.random_range(0..tied.len())];
        free[f] -= 1;
        for j in units[i].t_obs.iter() {
            demand[j][f] -= 1.0;
        }
        f
    };

    while remaining > 0 {
        let mut counts = vec![0usize; k];
        for &i in &order {
            if fold_of[i].is_none() {
                for j in units[i].t_obs.iter() {
                    counts[j] += 1;
                }
            }
        }
        let label = (0..k).filter(|&j| counts[j] > 0).min_by_key(|&j| (counts[j], j));
        for &i in &order {
            if fold_of[i].is_some() || label.is_some_and(|l| !units[i].t_obs.contains(l)) {
                continue;
            }
            fold_of[i] = Some(place(i, label, &mut free, &mut demand, rng));
            remaining -= 1;
        }
    }

    let mut folds: [Vec<Unit>; 3] = Default::default();
    for (i, f) in fold_of.into_iter().enumerate() {
        folds[f.expect("every unit is placed")].push(units[i].clone());
    }
    let [train, val, test] = folds;
    Ok(Split { train, val, test })
}
