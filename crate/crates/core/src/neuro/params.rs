use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{NeuroError, Tensor};

pub type ParamId = usize;

/// Named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `value` under `name`, replacing nothing: names must be new.
    pub fn insert(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let id = self.tensors.len();
        self.names.push(name.to_string());
        self.tensors.push(value);
        self.index.insert(name.to_string(), id);
        id
    }

    /// Uniform in `±sqrt(6 / (rows + cols))`.
    pub fn insert_glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ParamId {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
        self.insert(name, Tensor::new(rows, cols, data).expect("positive dims"))
    }

    pub fn insert_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.insert(name, Tensor::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| &self.tensors[id])
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (i, n.as_str(), t))
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Copies values from `other` for every name both stores share, checking
    /// shapes. Names present only here are left as they are.
    pub fn load_from(&mut self, other: &BTreeMap<String, Tensor>) -> Result<(), NeuroError> {
        for (name, &id) in &self.index {
            let Some(src) = other.get(name) else {
                return Err(NeuroError::Checkpoint(format!("missing parameter {name}")));
            };
            if src.shape() != self.tensors[id].shape() {
                return Err(NeuroError::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    self.tensors[id].shape()
                )));
            }
            self.tensors[id] = src.clone();
        }
        Ok(())
    }
}

/// Per-parameter gradient accumulators; parameters a loss never reached stay
/// `None` and read as zero.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn new(param_count: usize) -> Self {
        Gradients {
            grads: vec![None; param_count],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(id).and_then(Option::as_ref)
    }

    /// Gradient for `id` as a dense tensor, zero when never touched.
    pub fn dense(&self, id: ParamId, params: &ParamStore) -> Tensor {
        self.get(id).cloned().unwrap_or_else(|| {
            let (r, c) = params.get(id).shape();
            Tensor::zeros(r, c)
        })
    }

    pub(crate) fn slot(&mut self, id: ParamId, shape: (usize, usize)) -> &mut Tensor {
        if id >= self.grads.len() {
            self.grads.resize(id + 1, None);
        }
        self.grads[id].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (id, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                let slot = self.slot(id, g.shape());
                slot.add_assign(g);
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale_assign(k);
        }
    }

    pub fn norm(&self) -> f64 {
        self.grads.iter().flatten().map(Tensor::norm_sq).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grads
            .iter()
            .flatten()
            .all(|g| g.data().iter().all(|x| x.is_finite()))
    }
}
