//! Experiment configuration files.
//!
//! A configuration is a TOML document. Every key except `dataset` has a
//! default:
//!
//! ```toml
//! methods = ["ncore", "ridge", "knn"]  # ncore, ncore_balanced, ridge,
//!                                      # ridge+hamming-fallback, knn
//! hpo_budget = 30                      # tuning runs per method
//! split = [0.6, 0.2, 0.2]              # train / validation / test
//! eval_seeds = [0, 1, 2, 3, 4]         # one replicate per seed
//! bootstrap_resamples = 100
//! ci_mode = "units"                    # or "seeds" for sweep summaries
//! workers = 1                          # sweep worker threads
//! output = "results"                   # directory for result files
//!
//! [dataset]
//! source = "simulate"                  # or "load" with `path = "..."`
//! n = 4000
//! k = 6
//! kappa = 10.0
//! seed = 0
//! # Optional covariate layout; defaults to the 32-feature HIV-like schema.
//! # [dataset.schema]
//! # rates = [0.3, 0.5]
//! # ranges = [[0.0, 1.0]]
//!
//! [training]                           # fixed neural-network settings
//! epochs = 300
//! patience = 30
//! arm_depth = 0                        # 0 ties arm depth to the base depth L
//! arm_activation = false
//! optimizer = "adam"
//! score_dim = 8                        # balancing-score dimension
//!
//! [sweep]                              # only for `combocf sweep`
//! axis = "kappa"                       # k, n or kappa
//! values = [5.0, 10.0, 15.0, 20.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{HarnessError, Result};
use crate::diffcore::OptimizerKind;
use crate::simcore::{CovariateSchema, SimConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ncore")]
    Ncore,
    #[serde(rename = "ncore_balanced")]
    NcoreBalanced,
    #[serde(rename = "ridge")]
    Ridge,
    #[serde(rename = "ridge+hamming-fallback")]
    RidgeHamming,
    #[serde(rename = "knn")]
    Knn,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ncore, Method::NcoreBalanced, Method::Ridge, Method::RidgeHamming, Method::Knn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ncore => "ncore",
            Method::NcoreBalanced => "ncore_balanced",
            Method::Ridge => "ridge",
            Method::RidgeHamming => "ridge+hamming-fallback",
            Method::Knn => "knn",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, Method::Ncore | Method::NcoreBalanced)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown method {s:?}; expected one of ncore, ncore_balanced, ridge, ridge+hamming-fallback, knn")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaSpec {
    /// Bernoulli rates of the leading indicator features.
    pub rates: Vec<f64>,
    /// Ranges of the trailing continuous features.
    pub ranges: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Simulate {
        n: usize,
        k: usize,
        kappa: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schema: Option<SchemaSpec>,
    },
    Load {
        path: PathBuf,
    },
}

impl DatasetSpec {
    pub fn sim_config(&self) -> Result<Option<SimConfig>> {
        match self {
            DatasetSpec::Simulate { n, k, kappa, seed, schema } => {
                let schema = match schema {
                    Some(s) => CovariateSchema::with_blocks(s.rates.clone(), s.ranges.clone())?,
                    None => CovariateSchema::hiv_default(),
                };
                Ok(Some(SimConfig { n: *n, k: *k, kappa: *kappa, schema, seed: *seed }))
            }
            DatasetSpec::Load { .. } => Ok(None),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub epochs: usize,
    pub patience: usize,
    /// Affine sublayers per arm; 0 uses the sampled base depth `L`.
    pub arm_depth: usize,
    pub arm_activation: bool,
    pub optimizer: OptimizerKind,
    pub score_dim: usize,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self { epochs: 300, patience: 30, arm_depth: 0, arm_activation: false, optimizer: OptimizerKind::Adam, score_dim: 8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMode {
    /// Bootstrap over test units within each replicate.
    Units,
    /// Bootstrap over replicate seeds.
    Seeds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    K,
    N,
    Kappa,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::N => "n",
            SweepAxis::Kappa => "kappa",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepAxis::K),
            "n" => Ok(SweepAxis::N),
            "kappa" | "κ" => Ok(SweepAxis::Kappa),
            _ => Err(HarnessError::Config(format!("unknown sweep axis {s:?}; expected k, n or kappa"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_budget")]
    pub hpo_budget: usize,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default = "default_seeds")]
    pub eval_seeds: Vec<u64>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_ci_mode")]
    pub ci_mode: CiMode,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Ncore, Method::Ridge, Method::Knn]
}

fn default_budget() -> usize {
    30
}

fn default_split() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_resamples() -> usize {
    crate::evalstats::DEFAULT_RESAMPLES
}

fn default_ci_mode() -> CiMode {
    CiMode::Units
}

fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec) -> Self {
        Self {
            dataset,
            methods: default_methods(),
            hpo_budget: default_budget(),
            split: default_split(),
            eval_seeds: default_seeds(),
            bootstrap_resamples: default_resamples(),
            ci_mode: default_ci_mode(),
            workers: default_workers(),
            training: TrainingSettings::default(),
            output: None,
            sweep: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(HarnessError::Config(m));
        let sum: f64 = self.split.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.split.iter().any(|r| !(*r >= 0.0)) {
            return err(format!("split ratios must be non-negative and sum to 1, got {:?}", self.split));
        }
        if self.hpo_budget == 0 {
            return err("hpo_budget must be at least 1".into());
        }
        if self.methods.is_empty() {
            return err("at least one method is required".into());
        }
        if self.eval_seeds.is_empty() {
            return err("at least one evaluation seed is required".into());
        }
        if self.bootstrap_resamples == 0 {
            return err("bootstrap_resamples must be at least 1".into());
        }
        if self.workers == 0 {
            return err("workers must be at least 1".into());
        }
        if self.training.epochs == 0 || self.training.score_dim == 0 {
            return err("training.epochs and training.score_dim must be positive".into());
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.len() < 2 {
                return err("a sweep needs at least two axis values".into());
            }
        }
        self.dataset.sim_config()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// First 16 hex digits of the SHA-256 of the canonical TOML rendering.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let digest = Sha256::digest(config.to_toml().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[dataset]
source = "simulate"
n = 200
k = 3
kappa = 5.0
"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.hpo_budget, 30);
        assert_eq!(c.split, [0.6, 0.2, 0.2]);
        assert_eq!(c.methods, vec![Method::Ncore, Method::Ridge, Method::Knn]);
        assert_eq!(c.training, TrainingSettings::default());
    }

    #[test]
    fn roundtrips_through_toml() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.methods = Method::ALL.to_vec();
        c.sweep = Some(SweepSpec { axis: SweepAxis::Kappa, values: vec![5.0, 10.0] });
        c.dataset = DatasetSpec::Simulate { n: 10, k: 2, kappa: 1.0, seed: 3, schema: Some(SchemaSpec { rates: vec![0.5], ranges: vec![(0.0, 2.0)] }) };
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(config_hash(&back), config_hash(&c));
        assert_eq!(config_hash(&c).len(), 16);
        c.hpo_budget = 2;
        assert_ne!(config_hash(&back), config_hash(&c));
    }

    #[test]
    fn rejects_invalid_configs() {
        for bad in [
            format!("{MINIMAL}\nsplit = [0.5, 0.2, 0.2]"),
            format!("hpo_budget = 0\n{MINIMAL}"),
            format!("methods = [\"gp\"]\n{MINIMAL}"),
            format!("bogus = 1\n{MINIMAL}"),
            "[dataset]\nsource = \"simulate\"\nn = 5".to_string(),
        ] {
            assert!(matches!(ExperimentConfig::from_toml(&bad), Err(HarnessError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("gp".parse::<Method>().is_err());
    }
}
