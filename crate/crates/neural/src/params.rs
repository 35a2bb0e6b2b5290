//! Named parameter arrays and their gradients.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub type ParamId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub data: Vec<f64>,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameters are held in f64 but every stored value is exactly
/// representable as f32, so checkpoints round-trip bit for bit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, ParamId>,
}

pub fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    /// Adds an array filled by `init`, rounded to f32.
    pub fn add(&mut self, name: &str, shape: &[usize], mut init: impl FnMut(usize) -> f64) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let n = shape.iter().product();
        let data = (0..n).map(|i| round_f32(init(i))).collect();
        let id = self.entries.len();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        });
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn add_uniform(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut impl Rng) -> ParamId {
        self.add(name, shape, |_| rng.gen_range(-bound..=bound))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn data(&self, id: ParamId) -> &[f64] {
        &self.entries[id].data
    }

    pub fn data_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id].data
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(ParamEntry::len).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            data: self.entries.iter().map(|e| vec![0.0; e.len()]).collect(),
        }
    }

    /// Same names, shapes and order.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }
}

/// Gradient arrays aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id]
    }

    pub fn add_scaled(&mut self, other: &Grads, scale: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }
}
