//! Dataset files.
//!
//! A dataset is a CSV file with header `id,x_0,...,x_{p-1},t_0,...,t_{k-1},y`
//! and a TOML sidecar next to it (`data.csv` -> `data.schema.toml`) holding
//! the covariate schema, `k` and, for simulated data, the generator
//! parameters needed to rebuild the outcome oracle. Loading never infers a
//! schema: a missing sidecar is an error.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::baselines::CompositeModel;
use crate::ncore::NcoreModel;
use crate::simcore::{generate_dataset, CovariateSchema, CovariateVector, Dataset, OutcomeOracle, SimConfig, TreatmentSet, Unit};

const SIDECAR_FORMAT: &str = "combocf-dataset";

/// Parameters that regenerate the simulator behind a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub n: usize,
    pub kappa: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub k: usize,
    pub seed: u64,
    pub schema: CovariateSchema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorInfo>,
}

impl Sidecar {
    /// Rebuilds the outcome oracle of a simulated dataset.
    pub fn oracle(&self) -> Result<Option<OutcomeOracle>> {
        let Some(g) = &self.generator else { return Ok(None) };
        let config = SimConfig { n: g.n, k: self.k, kappa: g.kappa, schema: self.schema.clone(), seed: g.seed };
        Ok(Some(generate_dataset(&config)?.1))
    }
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("schema.toml")
}

fn header(p: usize, k: usize) -> Vec<String> {
    let mut h = vec!["id".to_string()];
    h.extend((0..p).map(|i| format!("x_{i}")));
    h.extend((0..k).map(|j| format!("t_{j}")));
    h.push("y".into());
    h
}

/// Writes `dataset` as CSV plus sidecar; `generator` is recorded when given.
pub fn write_dataset(dataset: &Dataset, generator: Option<&GeneratorInfo>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::data(path, e.to_string()))?;
    let csv_err = |e: csv::Error| HarnessError::data(path, e.to_string());
    w.write_record(header(dataset.schema.p, dataset.k)).map_err(csv_err)?;
    for u in &dataset.units {
        let mut row = vec![u.id.to_string()];
        row.extend(u.x.0.iter().map(f64::to_string));
        row.extend((0..dataset.k).map(|j| if u.t_obs.contains(j) { "1" } else { "0" }.to_string()));
        row.push(u.y_obs.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    let sidecar = Sidecar {
        format: SIDECAR_FORMAT.into(),
        version: 1,
        k: dataset.k,
        seed: dataset.seed,
        schema: dataset.schema.clone(),
        generator: generator.cloned(),
    };
    let side = sidecar_path(path);
    fs::write(&side, toml::to_string(&sidecar).expect("sidecar serializes")).map_err(|e| HarnessError::io(&side, e))
}

pub fn read_sidecar(csv_path: &Path) -> Result<Sidecar> {
    let side = sidecar_path(csv_path);
    if !side.exists() {
        return Err(HarnessError::data(&side, "schema sidecar not found; datasets are never loaded without one"));
    }
    let text = fs::read_to_string(&side).map_err(|e| HarnessError::io(&side, e))?;
    let sidecar: Sidecar = toml::from_str(&text).map_err(|e| HarnessError::data(&side, e.to_string()))?;
    if sidecar.format != SIDECAR_FORMAT || sidecar.version != 1 {
        return Err(HarnessError::data(&side, format!("unsupported sidecar {} v{}", sidecar.format, sidecar.version)));
    }
    sidecar.schema.validate().map_err(|e| HarnessError::data(&side, e.to_string()))?;
    Ok(sidecar)
}

/// Loads and validates a dataset; errors name the offending line.
pub fn load_dataset(path: &Path) -> Result<(Dataset, Sidecar)> {
    let sidecar = read_sidecar(path)?;
    let (p, k) = (sidecar.schema.p, sidecar.k);
    let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::data(path, e.to_string()))?;
    let got: Vec<String> = r.headers().map_err(|e| HarnessError::data(path, e.to_string()))?.iter().map(str::to_string).collect();
    if got != header(p, k) {
        return Err(HarnessError::data(path, format!("line 1: header does not match sidecar (p={p}, k={k})")));
    }
    let mut units = Vec::new();
    for (i, record) in r.records().enumerate() {
        let line = i + 2;
        let bad = |m: String| HarnessError::data(path, format!("line {line}: {m}"));
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != p + k + 2 {
            return Err(bad(format!("{} fields, expected {}", record.len(), p + k + 2)));
        }
        let num = |col: usize| -> Result<f64> {
            record[col].trim().parse::<f64>().map_err(|_| bad(format!("column {} = {:?} is not a number", col + 1, &record[col])))
        };
        let id = record[0].trim().parse::<u64>().map_err(|_| bad(format!("id {:?} is not an unsigned integer", &record[0])))?;
        let x = (1..=p).map(num).collect::<Result<Vec<_>>>()?;
        let mut mask = 0u32;
        for j in 0..k {
            match record[1 + p + j].trim() {
                "0" => {}
                "1" => mask |= 1 << j,
                other => return Err(bad(format!("t_{j} = {other:?} must be 0 or 1"))),
            }
        }
        let t_obs = TreatmentSet::non_empty(mask, k).map_err(|e| bad(e.to_string()))?;
        let y_obs = num(1 + p + k)?;
        let unit = Unit { id, x: CovariateVector(x), t_obs, y_obs };
        unit.x.conforms(&sidecar.schema).map_err(|e| bad(e.to_string()))?;
        units.push(unit);
    }
    let dataset = Dataset { schema: sidecar.schema.clone(), k, units, seed: sidecar.seed };
    dataset.validate().map_err(|e| HarnessError::data(path, e.to_string()))?;
    Ok((dataset, sidecar))
}

/// Writes every unit's true outcome for every non-empty treatment set as
/// rows `id,mask,y_T`.
pub fn write_truth(units: &[Unit], oracle: &OutcomeOracle, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::data(path, e.to_string()))?;
    let csv_err = |e: csv::Error| HarnessError::data(path, e.to_string());
    w.write_record(["id", "mask", "y_T"]).map_err(csv_err)?;
    for u in units {
        for (m, y) in oracle.all_outcomes(&u.x, u.id).into_iter().enumerate() {
            w.write_record([u.id.to_string(), (m + 1).to_string(), y.to_string()]).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct CompositeFile {
    format: String,
    version: u32,
    model: CompositeModel,
}

const COMPOSITE_FORMAT: &str = "combocf-composite";

pub fn save_model(model: &super::FittedModel, path: &Path) -> Result<()> {
    let text = match model {
        super::FittedModel::Ncore(m) => m.to_json(),
        super::FittedModel::Composite(m) => serde_json::to_string_pretty(&CompositeFile { format: COMPOSITE_FORMAT.into(), version: 1, model: m.clone() })
            .expect("composite serializes"),
    };
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<super::FittedModel> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let probe: serde_json::Value = serde_json::from_str(&text).map_err(|e| HarnessError::data(path, e.to_string()))?;
    match probe.get("format").and_then(|f| f.as_str()) {
        Some(COMPOSITE_FORMAT) => {
            let file: CompositeFile = serde_json::from_value(probe).map_err(|e| HarnessError::data(path, e.to_string()))?;
            Ok(super::FittedModel::Composite(file.model))
        }
        _ => NcoreModel::from_json(&text).map(super::FittedModel::Ncore).map_err(|e| HarnessError::data(path, e.to_string())),
    }
}
