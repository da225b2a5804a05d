//! Versioned parameter checkpoints.
//!
//! A checkpoint is a JSON object:
//!
//! ```json
//! {
//!   "format": "combocf-params",
//!   "version": 1,
//!   "params": [
//!     { "name": "base.0.weight", "shape": [32, 16], "values": [ ... ] }
//!   ]
//! }
//! ```
//!
//! `values` are listed in storage order (input-major for weights) and
//! `shape` multiplies out to their count. Floats are written with the
//! shortest representation that round-trips, so reload is exact.

use serde::{Deserialize, Serialize};

use super::{DiffError, ParamStore};

pub const CHECKPOINT_FORMAT: &str = "combocf-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub params: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            params: store
                .iter()
                .map(|p| CheckpointEntry { name: p.name.clone(), shape: p.shape.clone(), values: p.value.clone() })
                .collect(),
        }
    }

    pub fn to_store(&self) -> Result<ParamStore, DiffError> {
        self.check_header()?;
        let mut store = ParamStore::new();
        for e in &self.params {
            store.add(e.name.clone(), e.shape.clone(), e.values.clone())?;
        }
        Ok(store)
    }

    /// Copies values into an existing store whose names and shapes must match.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<(), DiffError> {
        self.check_header()?;
        if self.params.len() != store.len() {
            return Err(DiffError::Checkpoint(format!("{} params in checkpoint, {} in model", self.params.len(), store.len())));
        }
        for (e, id) in self.params.iter().zip(store.ids().collect::<Vec<_>>()) {
            let p = store.get_mut(id);
            if p.name != e.name || p.shape != e.shape {
                return Err(DiffError::Checkpoint(format!("param {:?} {:?} does not match {:?} {:?}", e.name, e.shape, p.name, p.shape)));
            }
            p.value.copy_from_slice(&e.values);
        }
        Ok(())
    }

    fn check_header(&self) -> Result<(), DiffError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(DiffError::Checkpoint(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(DiffError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DiffError> {
        serde_json::from_str(text).map_err(|e| DiffError::Checkpoint(e.to_string()))
    }
}
