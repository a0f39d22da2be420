use serde::{Deserialize, Serialize};

use super::params::ParamEntry;
use super::{ParameterStore, Tensor, TensorError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: [usize; 2],
    value: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
}

/// Serializable snapshot of a [`ParameterStore`]: values, Adam moments and
/// step counter, keyed by parameter name in insertion order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreCheckpoint {
    pub version: u32,
    pub adam_step: u64,
    params: Vec<ParamRecord>,
}

impl ParameterStore {
    pub fn to_checkpoint(&self) -> StoreCheckpoint {
        StoreCheckpoint {
            version: CHECKPOINT_VERSION,
            adam_step: self.step,
            params: self
                .entries
                .iter()
                .map(|e| ParamRecord {
                    name: e.name.clone(),
                    shape: e.value.shape(),
                    value: e.value.data().to_vec(),
                    adam_m: e.m.data().to_vec(),
                    adam_v: e.v.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds a store from a snapshot. Gradients start at zero.
    pub fn from_checkpoint(ckpt: &StoreCheckpoint) -> Result<Self, TensorError> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(TensorError::CorruptStore(format!(
                "checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        let mut store = ParameterStore::new();
        for r in &ckpt.params {
            let [rows, cols] = r.shape;
            let entry = ParamEntry {
                name: r.name.clone(),
                value: Tensor::new(rows, cols, r.value.clone())?,
                grad: Tensor::zeros(rows, cols),
                m: Tensor::new(rows, cols, r.adam_m.clone())?,
                v: Tensor::new(rows, cols, r.adam_v.clone())?,
            };
            store.entries.push(entry);
        }
        store.step = ckpt.adam_step;
        store.rebuild_index()?;
        Ok(store)
    }
}

impl StoreCheckpoint {
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn shape_of(&self, name: &str) -> Option<[usize; 2]> {
        self.params.iter().find(|p| p.name == name).map(|p| p.shape)
    }
}
