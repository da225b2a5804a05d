use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use combocf::baselines::DEFAULT_NEIGHBORS;
use combocf::evalstats::{counterfactual_rmse, factual_rmse, MetricReport};
use combocf::harness::{
    fit_method, hpo_search, load_dataset, load_model, run_benchmark, run_sweep, save_model, split_dataset, write_benchmark,
    write_dataset, write_sweep_csv, write_truth, config_hash, ExperimentConfig, GeneratorInfo, HarnessError,
    HyperParams, Method, Result, SweepAxis, TrainingSettings,
};
use combocf::ncore::NcoreConfig;
use combocf::seeding;
use combocf::simcore::{generate_dataset, SimConfig};

/// Counterfactual estimation for treatment combinations: simulate, split,
/// train, tune, evaluate and sweep.
#[derive(Parser)]
#[command(name = "combocf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV plus schema sidecar).
    Simulate(SimulateArgs),
    /// Stratified train/validation/test split of a dataset file.
    Split(SplitArgs),
    /// Fit one method with fixed hyperparameters.
    Train(TrainArgs),
    /// Score a saved model on a dataset file.
    Evaluate(EvaluateArgs),
    /// Random hyperparameter search; saves the best model.
    Hpo(HpoArgs),
    /// Run a k, n or kappa sweep and write long-format CSV.
    Sweep(SweepArgs),
    /// Write every counterfactual outcome of a simulated dataset.
    ExportTruth(ExportTruthArgs),
    /// Full split, tune and test protocol for every configured method.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value_t = 10.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Take the dataset section from an experiment config instead of the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.6, 0.2, 0.2])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives train.csv, val.csv and test.csv with their sidecars.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainingFlags {
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 30)]
    patience: usize,
    /// Balancing-score dimension for ncore_balanced.
    #[arg(long, default_value_t = 8)]
    score_dim: usize,
}

impl TrainingFlags {
    fn settings(&self) -> TrainingSettings {
        TrainingSettings { epochs: self.epochs, patience: self.patience, score_dim: self.score_dim, ..TrainingSettings::default() }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    method: Method,
    #[arg(long)]
    train: PathBuf,
    /// Validation fold for early stopping; defaults to the training fold.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Hyperparameters as JSON, e.g. '{"learner":"ridge","c":1.0}'.
    #[arg(long)]
    hyperparams: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    training: TrainingFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HpoArgs {
    #[arg(long)]
    method: Method,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long, default_value_t = 30)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    training: TrainingFlags,
    #[arg(long)]
    out: PathBuf,
    /// JSON list of every run record.
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentFlags {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated method names, overriding the config.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    workers: Option<usize>,
}

impl ExperimentFlags {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::load(&self.config)?;
        if let Some(m) = &self.methods {
            c.methods = m.clone();
        }
        if let Some(b) = self.budget {
            c.hpo_budget = b;
        }
        if let Some(s) = &self.seeds {
            c.eval_seeds = s.clone();
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentFlags,
    /// Overrides the config's sweep axis.
    #[arg(long)]
    axis: Option<SweepAxis>,
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Defaults to sweep.csv inside the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportTruthArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    experiment: ExperimentFlags,
    /// Defaults to the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    match path {
        Some(p) => fs::write(p, text + "\n").map_err(|e| HarnessError::Io { path: p.to_path_buf(), source: e }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn default_hyperparams(method: Method, k: usize, p: usize) -> HyperParams {
    match method {
        Method::Ncore | Method::NcoreBalanced => {
            let c = NcoreConfig::new(k, p);
            HyperParams::Ncore {
                hidden: c.hidden,
                layers: c.base_layers,
                batch_size: c.batch_size,
                weight_decay: c.weight_decay,
                learning_rate: c.learning_rate,
                dropout: c.dropout,
            }
        }
        Method::Ridge | Method::RidgeHamming => HyperParams::Ridge { c: 1.0 },
        Method::Knn => HyperParams::Knn { neighbors: DEFAULT_NEIGHBORS },
    }
}

fn output_dir(config: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("results"))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => {
            let sim = match &a.config {
                Some(path) => ExperimentConfig::load(path)?
                    .dataset
                    .sim_config()?
                    .ok_or_else(|| HarnessError::Config("the config loads its dataset from a file".into()))?,
                None => SimConfig { n: a.n, k: a.k, kappa: a.kappa, seed: a.seed, ..SimConfig::default() },
            };
            let (dataset, _) = generate_dataset(&sim)?;
            write_dataset(&dataset, Some(&GeneratorInfo { n: sim.n, kappa: sim.kappa, seed: sim.seed }), &a.out)
        }
        Command::Split(a) => {
            let (dataset, sidecar) = load_dataset(&a.data)?;
            let ratios = [a.ratios[0], a.ratios[1], a.ratios[2]];
            let split = split_dataset(&dataset.units, dataset.k, ratios, &mut seeding::stream(a.seed, "split", &[]))?;
            fs::create_dir_all(&a.out_dir).map_err(|e| HarnessError::Io { path: a.out_dir.clone(), source: e })?;
            for (name, fold) in [("train", split.train), ("val", split.val), ("test", split.test)] {
                write_dataset(&dataset.with_units(fold), sidecar.generator.as_ref(), &a.out_dir.join(format!("{name}.csv")))?;
            }
            Ok(())
        }
        Command::Train(a) => {
            let (train, _) = load_dataset(&a.train)?;
            let val = match &a.val {
                Some(p) => load_dataset(p)?.0.units,
                None => train.units.clone(),
            };
            let p = train.schema.p;
            let hp = match &a.hyperparams {
                Some(text) => serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("--hyperparams: {e}")))?,
                None => default_hyperparams(a.method, train.k, p),
            };
            let model = fit_method(a.method, &hp, &train.units, &val, train.k, &a.training.settings(), a.seed)?;
            save_model(&model, &a.out)
        }
        Command::Evaluate(a) => {
            let model = load_model(&a.model)?;
            let (data, sidecar) = load_dataset(&a.data)?;
            let factual = factual_rmse(&model, &data.units)?;
            let counterfactual: Option<MetricReport> = match sidecar.oracle()? {
                Some(oracle) => {
                    let mut rng = seeding::stream(a.seed, "bootstrap", &[]);
                    Some(counterfactual_rmse(&model, &oracle, &data.units, a.resamples, &mut rng)?)
                }
                None => None,
            };
            let report = serde_json::json!({ "n": data.units.len(), "factual_rmse": factual, "counterfactual": counterfactual });
            write_json(&report, a.out.as_deref())
        }
        Command::Hpo(a) => {
            let (train, _) = load_dataset(&a.train)?;
            let (val, _) = load_dataset(&a.val)?;
            let hash = format!("{}-{}", a.method, a.budget);
            let outcome =
                hpo_search(a.method, &train.units, &val.units, train.k, a.budget, &a.training.settings(), a.seed, &hash)?;
            save_model(&outcome.model, &a.out)?;
            if let Some(path) = &a.records {
                write_json(&outcome.records, Some(path))?;
            }
            write_json(&outcome.best, None)
        }
        Command::Sweep(a) => {
            let mut config = a.experiment.load()?;
            let spec = config.sweep.take();
            let axis = a.axis.or(spec.as_ref().map(|s| s.axis)).ok_or_else(|| HarnessError::Config("no sweep axis given".into()))?;
            let values = a.values.or(spec.map(|s| s.values)).ok_or_else(|| HarnessError::Config("no sweep values given".into()))?;
            let path = a.out.unwrap_or_else(|| output_dir(&config, None).join("sweep.csv"));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| HarnessError::Io { path: dir.to_path_buf(), source: e })?;
            }
            let rows = run_sweep(&config, axis, &values)?;
            write_sweep_csv(&rows, &path)
        }
        Command::ExportTruth(a) => {
            let (data, sidecar) = load_dataset(&a.data)?;
            let oracle = sidecar.oracle()?.ok_or_else(|| HarnessError::Data {
                path: a.data.clone(),
                message: "dataset was not simulated; no counterfactual truth available".into(),
            })?;
            write_truth(&data.units, &oracle, &a.out)
        }
        Command::Benchmark(a) => {
            let started = Instant::now();
            let config = a.experiment.load()?;
            let dir = output_dir(&config, a.out);
            let report = run_benchmark(&config)?;
            write_benchmark(&report, &dir, started)?;
            eprintln!("config {} -> {}", config_hash(&config), dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
