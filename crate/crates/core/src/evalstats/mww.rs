use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Combined sample size up to which p-values are exact.
pub const EXACT_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MwwResult {
    /// `U` of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample, first sample first.
fn midranks(a: &[f64], b: &[f64]) -> Vec<f64> {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = mid;
        }
        i = j + 1;
    }
    ranks
}

fn u_statistic(rank_sum: f64, n_a: usize) -> f64 {
    rank_sum - (n_a * (n_a + 1)) as f64 / 2.0
}

/// Exact two-sided p: the share of all relabellings of the pooled midranks
/// whose `U` is at least as far from its mean as the observed one.
pub fn mww_exact_p(a: &[f64], b: &[f64]) -> f64 {
    let (n_a, n) = (a.len(), a.len() + b.len());
    let ranks = midranks(a, b);
    let mu = (n_a * (n - n_a)) as f64 / 2.0;
    let observed = (u_statistic(ranks[..n_a].iter().sum(), n_a) - mu).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n_a {
            continue;
        }
        let sum: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        total += 1;
        if (u_statistic(sum, n_a) - mu).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Normal approximation with tie and continuity corrections.
pub fn mww_normal_p(a: &[f64], b: &[f64]) -> f64 {
    let (n_a, n_b) = (a.len() as f64, b.len() as f64);
    let n = n_a + n_b;
    let ranks = midranks(a, b);
    let u = u_statistic(ranks[..a.len()].iter().sum(), a.len());
    let mu = n_a * n_b / 2.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        ties += t * t * t - t;
    }
    let var = n_a * n_b / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Two-sided Mann-Whitney-Wilcoxon test of `a` against `b`; exact when the
/// combined size is at most [`EXACT_LIMIT`].
pub fn mww_test(a: &[f64], b: &[f64]) -> MwwResult {
    assert!(!a.is_empty() && !b.is_empty(), "both samples must be non-empty");
    let ranks = midranks(a, b);
    let u = u_statistic(ranks[..a.len()].iter().sum(), a.len());
    let exact = a.len() + b.len() <= EXACT_LIMIT;
    let p = if exact { mww_exact_p(a, b) } else { mww_normal_p(a, b) };
    MwwResult { u, p, exact }
}
