use rand::Rng;

pub const DEFAULT_RESAMPLES: usize = 100;

/// Percentile `q` in [0, 1] of sorted data, interpolating linearly between
/// closest ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile 2.5/97.5 bootstrap interval of `statistic` over resamples of
/// `values` drawn with replacement.
pub fn bootstrap_ci_with<R: Rng + ?Sized>(
    values: &[f64],
    n_resamples: usize,
    rng: &mut R,
    statistic: impl Fn(&[f64]) -> f64,
) -> (f64, f64) {
    assert!(!values.is_empty() && n_resamples > 0, "bootstrap needs data and at least one resample");
    let n = values.len();
    let mut sample = vec![0.0; n];
    let mut stats: Vec<f64> = (0..n_resamples)
        .map(|_| {
            sample.iter_mut().for_each(|s| *s = values[rng.random_range(0..n)]);
            statistic(&sample)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    (percentile(&stats, 0.025), percentile(&stats, 0.975))
}

/// Bootstrap interval of the RMSE given per-unit mean squared errors.
pub fn bootstrap_ci<R: Rng + ?Sized>(per_unit_sq_errors: &[f64], n_resamples: usize, rng: &mut R) -> (f64, f64) {
    bootstrap_ci_with(per_unit_sq_errors, n_resamples, rng, |s| (s.iter().sum::<f64>() / s.len() as f64).sqrt())
}
