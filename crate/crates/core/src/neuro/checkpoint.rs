use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NeuroError, ParamStore, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    version: u32,
    params: BTreeMap<String, StoredTensor>,
    #[serde(default)]
    meta: serde_json::Value,
}

/// Named parameter values plus free-form metadata, stored as
/// `{"version":1,"params":{name:{"shape":[..],"data":[..]}},"meta":..}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: BTreeMap<String, Tensor>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, meta: serde_json::Value) -> Self {
        Checkpoint {
            params: store.iter().map(|(_, n, t)| (n.to_string(), t.clone())).collect(),
            meta,
        }
    }

    pub fn to_json(&self) -> String {
        let doc = Document {
            version: CHECKPOINT_VERSION,
            params: self
                .params
                .iter()
                .map(|(n, t)| {
                    let stored = StoredTensor {
                        shape: vec![t.rows(), t.cols()],
                        data: t.data().to_vec(),
                    };
                    (n.clone(), stored)
                })
                .collect(),
            meta: self.meta.clone(),
        };
        serde_json::to_string(&doc).expect("checkpoints serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuroError> {
        let doc: Document = serde_json::from_str(text).map_err(|e| NeuroError::Checkpoint(e.to_string()))?;
        if doc.version != CHECKPOINT_VERSION {
            return Err(NeuroError::Checkpoint(format!("unsupported version {}", doc.version)));
        }
        let mut params = BTreeMap::new();
        for (name, stored) in doc.params {
            let (rows, cols) = match stored.shape.as_slice() {
                [n] => (1, *n),
                [r, c] => (*r, *c),
                other => {
                    return Err(NeuroError::Checkpoint(format!("parameter {name} has shape {other:?}")));
                }
            };
            let t = Tensor::new(rows, cols, stored.data)
                .map_err(|e| NeuroError::Checkpoint(format!("parameter {name}: {e}")))?;
            params.insert(name, t);
        }
        Ok(Checkpoint { params, meta: doc.meta })
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuroError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NeuroError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
