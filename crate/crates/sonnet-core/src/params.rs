//! Named model parameters with deterministic iteration order.
//!
//! Every trainable tensor lives in one `ParamStore`. Builders bind the whole
//! store into a fresh graph per step, run backward, then hand the collected
//! gradients to an optimizer, which updates the store in place.

use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;
use indexmap::IndexMap;

#[derive(Debug, Default, Clone)]
pub struct ParamStore {
    map: IndexMap<String, Tensor>,
}

pub struct Bound {
    ids: IndexMap<String, NodeId>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        assert!(
            self.map.insert(name.clone(), t).is_none(),
            "parameter {name} registered twice"
        );
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn total_values(&self) -> usize {
        self.map.values().map(Tensor::numel).sum()
    }

    /// FNV-1a over names, shapes and value bit patterns. Equal digests mean
    /// bitwise-equal stores.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |byte: u8| {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        };
        for (name, t) in &self.map {
            for b in name.bytes() {
                eat(b);
            }
            for &d in &t.shape {
                for b in (d as u64).to_le_bytes() {
                    eat(b);
                }
            }
            for &v in &t.data {
                for b in v.to_bits().to_le_bytes() {
                    eat(b);
                }
            }
        }
        h
    }

    /// Enters every parameter into `g` as a leaf. Registration order is
    /// preserved, so graph layout is reproducible.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        let mut ids = IndexMap::new();
        for (name, t) in &self.map {
            ids.insert(name.clone(), g.leaf(t.clone()));
        }
        Bound { ids }
    }
}

impl Bound {
    pub fn id(&self, name: &str) -> NodeId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    /// Gradients for every parameter the loss touched, in registration order.
    pub fn grads(&self, g: &Graph) -> IndexMap<String, Vec<f64>> {
        let mut out = IndexMap::new();
        for (name, &id) in &self.ids {
            if let Some(gr) = g.grad(id) {
                out.insert(name.clone(), gr.to_vec());
            }
        }
        out
    }
}
