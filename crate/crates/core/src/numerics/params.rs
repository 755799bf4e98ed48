use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Prng, Tensor};
use crate::error::{Error, Result};

/// Named parameter tensors, kept in insertion order.
///
/// Insertion order is the canonical order for checkpoints and for gradient
/// slots, so two stores built by the same code are laid out identically.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::invalid(alloc::format!("duplicate parameter {name}")));
        }
        let id = self.tensors.len();
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.tensors[i])
    }

    /// Like [`get`](Self::get) but reports a missing name as an error.
    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::invalid(alloc::format!("missing parameter {name}")))
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn tensor(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn tensor_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Tensor of the given shape with entries uniform in `[-k, k]`.
pub fn uniform(shape: &[usize], k: f64, prng: &mut Prng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = (2.0 * prng.next_f64() - 1.0) * k;
    }
    t
}

/// Weight matrix `[rows, cols]` with the `1/sqrt(fan_in)` uniform rule, fan-in being `cols`.
pub fn fan_in_uniform(rows: usize, cols: usize, prng: &mut Prng) -> Tensor {
    uniform(&[rows, cols], 1.0 / libm::sqrt(cols as f64), prng)
}
