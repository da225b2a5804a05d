use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use super::bench::{summarize_cells, Cell};
use super::{run_replicate, CiMode, DatasetSpec, ExperimentConfig, HarnessError, Method, ReplicateResult, Result, SweepAxis};

/// One plottable result: a method's test RMSE for one axis value and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub method: Method,
    pub seed: u64,
    pub rmse: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

fn cell_config(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut config = base.clone();
    let DatasetSpec::Simulate { n, k, kappa, .. } = &mut config.dataset else {
        return Err(HarnessError::Config("sweeps need a simulated dataset".into()));
    };
    let count = |v: f64| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(HarnessError::Config(format!("{} sweep values must be positive integers, got {v}", axis.name())))
        }
    };
    match axis {
        SweepAxis::K => *k = count(value)?,
        SweepAxis::N => *n = count(value)?,
        SweepAxis::Kappa => *kappa = value,
    }
    config.sweep = None;
    Ok(config)
}

/// Runs one benchmark replicate per (axis value, seed) cell on `base.workers`
/// threads. Rows come back ordered by value, then method, then seed,
/// regardless of completion order.
pub fn run_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    base.validate()?;
    if values.len() < 2 {
        return Err(HarnessError::Config("a sweep needs at least two axis values".into()));
    }
    let configs = values.iter().map(|&v| cell_config(base, axis, v)).collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, u64)> = (0..values.len()).flat_map(|vi| base.eval_seeds.iter().map(move |&s| (vi, s))).collect();
    let next = AtomicUsize::new(0);
    let mut results: Vec<Option<ReplicateResult>> = vec![None; cells.len()];
    let (tx, rx) = mpsc::channel::<(usize, Result<ReplicateResult>)>();
    std::thread::scope(|scope| {
        for _ in 0..base.workers.min(cells.len()) {
            let tx = tx.clone();
            let (next, cells, configs) = (&next, &cells, &configs);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(vi, seed)) = cells.get(i) else { break };
                let outcome = run_replicate(&configs[vi], seed);
                let failed = outcome.is_err();
                if tx.send((i, outcome)).is_err() || failed {
                    next.store(cells.len(), Ordering::Relaxed);
                    break;
                }
            });
        }
        drop(tx);
        let mut first_error = None;
        for (i, outcome) in rx {
            match outcome {
                Ok(r) => results[i] = Some(r),
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        first_error.map_or(Ok(()), Err)
    })?;

    let mut rows = Vec::with_capacity(cells.len() * base.methods.len());
    for (vi, &value) in values.iter().enumerate() {
        for (mi, &method) in base.methods.iter().enumerate() {
            for (ci, &(cv, seed)) in cells.iter().enumerate() {
                if cv != vi {
                    continue;
                }
                let rep = results[ci].as_ref().expect("every cell completed");
                let run = &rep.selected[mi];
                let (rmse, ci_lo, ci_hi) = match &run.test {
                    Some(t) => (t.point, t.lower, t.upper),
                    None => (rep.test_factual_rmse[mi], f64::NAN, f64::NAN),
                };
                rows.push(SweepRow { axis: axis.name().into(), value, method, seed, rmse, ci_lo, ci_hi });
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::data(path, e.to_string()))?;
    let csv_err = |e: csv::Error| HarnessError::data(path, e.to_string());
    w.write_record(["axis", "value", "method", "seed", "rmse", "ci_lo", "ci_hi"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.axis.clone(),
            r.value.to_string(),
            r.method.name().to_string(),
            r.seed.to_string(),
            r.rmse.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Mean RMSE per (value, method) with an interval in the chosen mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub value: f64,
    pub method: Method,
    pub mean_rmse: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl SweepSummary {
    pub fn half_width(&self) -> f64 {
        (self.ci_hi - self.ci_lo) / 2.0
    }
}

pub fn summarize_sweep(rows: &[SweepRow], mode: CiMode, resamples: usize) -> Vec<SweepSummary> {
    let mut values: Vec<f64> = Vec::new();
    let mut methods: Vec<Method> = Vec::new();
    for r in rows {
        if !values.contains(&r.value) {
            values.push(r.value);
        }
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let mut out = Vec::new();
    for (vi, &value) in values.iter().enumerate() {
        let cells: Vec<Vec<Cell>> = methods
            .iter()
            .map(|&m| {
                rows.iter()
                    .filter(|r| r.value == value && r.method == m)
                    .map(|r| Cell { rmse: r.rmse, interval: (r.ci_lo.is_finite() && r.ci_hi.is_finite()).then_some((r.ci_lo, r.ci_hi)) })
                    .collect()
            })
            .collect();
        for s in summarize_cells(&methods, &cells, mode, resamples, vi as u64) {
            out.push(SweepSummary { value, method: s.method, mean_rmse: s.mean_rmse, ci_lo: s.ci_lo, ci_hi: s.ci_hi });
        }
    }
    out
}
