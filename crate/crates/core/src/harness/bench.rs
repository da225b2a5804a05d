use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{config_hash, hpo_search, split_dataset, CiMode, DatasetSpec, ExperimentConfig, HarnessError, Method, Result, RunRecord};
use crate::evalstats::{bootstrap_ci_with, counterfactual_rmse, factual_rmse, mww_test};
use crate::seeding;
use crate::simcore::{generate_dataset, Dataset, OutcomeOracle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fold {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Search,
    Select,
    Evaluate,
}

/// Ordered record of which fold each phase of each method touched.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccessLog(pub Vec<(Method, Phase, Fold)>);

impl AccessLog {
    fn record(&mut self, method: Method, phase: Phase, fold: Fold) {
        self.0.push((method, phase, fold));
    }

    /// Whether every test-fold access of a method follows its selection.
    pub fn test_untouched_before_selection(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &(m, phase, fold))| {
            fold != Fold::Test || (phase == Phase::Evaluate && self.0[..i].iter().any(|&(m2, p2, _)| m2 == m && p2 == Phase::Select))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Selected run per method, with its test report.
    pub selected: Vec<RunRecord>,
    /// Factual RMSE of each selected run on the test fold.
    pub test_factual_rmse: Vec<f64>,
    pub trials: Vec<RunRecord>,
    pub access: AccessLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_rmse: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub rmse_per_seed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method: Method,
    pub against: Method,
    pub u: f64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config_hash: String,
    pub summary: Vec<MethodSummary>,
    /// Two-sided MWW tests of the first method against each other method
    /// over per-seed test RMSEs.
    pub comparisons: Vec<Comparison>,
    pub replicates: Vec<ReplicateResult>,
}

/// Dataset and oracle shared by every replicate; eval seeds vary the split,
/// the search and the network initialisation, never the data.
fn replicate_data(spec: &DatasetSpec) -> Result<(Dataset, Option<OutcomeOracle>)> {
    match spec {
        DatasetSpec::Simulate { .. } => {
            let sim = spec.sim_config()?.expect("simulated spec");
            let (d, o) = generate_dataset(&sim)?;
            Ok((d, Some(o)))
        }
        DatasetSpec::Load { path } => {
            let (d, sidecar) = super::load_dataset(path)?;
            Ok((d, sidecar.oracle()?))
        }
    }
}

/// Split, tune and evaluate every configured method for one seed.
pub fn run_replicate(config: &ExperimentConfig, seed: u64) -> Result<ReplicateResult> {
    let hash = config_hash(config);
    let (dataset, oracle) = replicate_data(&config.dataset)?;
    let split = split_dataset(&dataset.units, dataset.k, config.split, &mut seeding::stream(seed, "split", &[]))?;
    if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
        return Err(HarnessError::Config(format!("split {:?} leaves a fold empty", config.split)));
    }
    let mut access = AccessLog::default();
    let mut selected = Vec::with_capacity(config.methods.len());
    let mut test_factual_rmse = Vec::with_capacity(config.methods.len());
    let mut trials = Vec::new();
    for (mi, &method) in config.methods.iter().enumerate() {
        access.record(method, Phase::Search, Fold::Train);
        access.record(method, Phase::Search, Fold::Val);
        let outcome = hpo_search(method, &split.train, &split.val, dataset.k, config.hpo_budget, &config.training, seed, &hash)?;
        access.record(method, Phase::Select, Fold::Val);
        let mut best = outcome.best;
        access.record(method, Phase::Evaluate, Fold::Test);
        if let Some(oracle) = &oracle {
            let mut rng = seeding::stream(seed, "bootstrap", &[mi as u64]);
            best.test = Some(counterfactual_rmse(&outcome.model, oracle, &split.test, config.bootstrap_resamples, &mut rng)?);
        }
        test_factual_rmse.push(factual_rmse(&outcome.model, &split.test)?);
        selected.push(best);
        trials.extend(outcome.records);
    }
    Ok(ReplicateResult {
        seed,
        n_train: split.train.len(),
        n_val: split.val.len(),
        n_test: split.test.len(),
        selected,
        test_factual_rmse,
        trials,
        access,
    })
}

/// Per-method means over replicates, with units-mode or seeds-mode intervals.
pub(crate) fn summarize(methods: &[Method], replicates: &[ReplicateResult], mode: CiMode, resamples: usize, salt: u64) -> Vec<MethodSummary> {
    let cells: Vec<Vec<Cell>> = (0..methods.len())
        .map(|mi| {
            let complete = replicates.iter().all(|r| r.selected[mi].test.is_some());
            replicates
                .iter()
                .map(|r| match (&r.selected[mi].test, complete) {
                    (Some(t), true) => Cell { rmse: t.point, interval: Some((t.lower, t.upper)) },
                    _ => Cell { rmse: r.test_factual_rmse[mi], interval: None },
                })
                .collect()
        })
        .collect();
    summarize_cells(methods, &cells, mode, resamples, salt)
}

/// One method's result for one seed; `interval` is the units-bootstrap CI
/// when counterfactual truth was available.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Cell {
    pub rmse: f64,
    pub interval: Option<(f64, f64)>,
}

/// `cells[m][s]` holds method `m` on seed `s`.
pub(crate) fn summarize_cells(methods: &[Method], cells: &[Vec<Cell>], mode: CiMode, resamples: usize, salt: u64) -> Vec<MethodSummary> {
    methods
        .iter()
        .zip(cells)
        .enumerate()
        .map(|(mi, (&method, per_seed))| {
            let rmse: Vec<f64> = per_seed.iter().map(|c| c.rmse).collect();
            let mean = rmse.iter().sum::<f64>() / rmse.len() as f64;
            let intervals: Option<Vec<(f64, f64)>> = per_seed.iter().map(|c| c.interval).collect();
            let (ci_lo, ci_hi) = match (mode, intervals) {
                (CiMode::Units, Some(iv)) => {
                    let n = iv.len() as f64;
                    (iv.iter().map(|i| i.0).sum::<f64>() / n, iv.iter().map(|i| i.1).sum::<f64>() / n)
                }
                _ => {
                    let mut rng = seeding::stream(salt, "seed-bootstrap", &[mi as u64]);
                    bootstrap_ci_with(&rmse, resamples, &mut rng, |s| s.iter().sum::<f64>() / s.len() as f64)
                }
            };
            MethodSummary { method, mean_rmse: mean, ci_lo, ci_hi, rmse_per_seed: rmse }
        })
        .collect()
}

pub fn run_benchmark(config: &ExperimentConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let replicates = config.eval_seeds.iter().map(|&s| run_replicate(config, s)).collect::<Result<Vec<_>>>()?;
    let summary = summarize(&config.methods, &replicates, config.ci_mode, config.bootstrap_resamples, 0);
    let comparisons = summary
        .iter()
        .skip(1)
        .map(|other| {
            let r = mww_test(&summary[0].rmse_per_seed, &other.rmse_per_seed);
            Comparison { method: summary[0].method, against: other.method, u: r.u, p: r.p }
        })
        .collect();
    Ok(BenchmarkReport { config_hash: config_hash(config), summary, comparisons, replicates })
}

/// Writes `results.json`, `results.csv` (one row per method and seed) and a
/// separate `timing.json`, the only file whose contents vary between runs.
pub fn write_benchmark(report: &BenchmarkReport, dir: &Path, started: Instant) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let json = dir.join("results.json");
    fs::write(&json, serde_json::to_string_pretty(report).expect("report serializes")).map_err(|e| HarnessError::io(&json, e))?;

    let csv_path = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| HarnessError::data(&csv_path, e.to_string()))?;
    let csv_err = |e: csv::Error| HarnessError::data(&csv_path, e.to_string());
    w.write_record(["method", "seed", "rmse", "ci_lo", "ci_hi", "val_rmse", "test_factual_rmse"]).map_err(csv_err)?;
    for rep in &report.replicates {
        for (run, factual) in rep.selected.iter().zip(&rep.test_factual_rmse) {
            let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
            w.write_record([
                run.method.name().to_string(),
                rep.seed.to_string(),
                opt(run.test.as_ref().map(|t| t.point)),
                opt(run.test.as_ref().map(|t| t.lower)),
                opt(run.test.as_ref().map(|t| t.upper)),
                opt(run.val_rmse),
                factual.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(&csv_path, e))?;

    let timing = dir.join("timing.json");
    let runs: Vec<_> = report
        .replicates
        .iter()
        .flat_map(|r| r.trials.iter())
        .map(|t| serde_json::json!({ "method": t.method, "seed": t.seed, "trial": t.trial, "seconds": t.wall_time.as_secs_f64() }))
        .collect();
    let body = serde_json::json!({ "total_seconds": started.elapsed().as_secs_f64(), "runs": runs });
    fs::write(&timing, serde_json::to_string_pretty(&body).expect("timing serializes")).map_err(|e| HarnessError::io(&timing, e))
}
