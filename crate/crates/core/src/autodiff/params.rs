use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AutodiffError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable tensors in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter; names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    /// Replaces a parameter's value, possibly with a different shape.
    pub fn replace(&mut self, id: ParamId, value: Tensor) {
        self.values[id.0] = value;
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Total scalar count over all parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let params = self
            .names
            .iter()
            .zip(&self.values)
            .map(|(n, t)| {
                (
                    n.clone(),
                    StoredTensor {
                        shape: t.shape().to_vec(),
                        data: t.data().to_vec(),
                    },
                )
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            order: self.names.clone(),
            params,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, AutodiffError> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(AutodiffError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let mut store = ParamStore::new();
        for name in &ck.order {
            let st = ck
                .params
                .get(name)
                .ok_or_else(|| AutodiffError::Checkpoint(format!("missing parameter {name}")))?;
            let [r, c] = match st.shape.as_slice() {
                [r, c] => [*r, *c],
                other => {
                    return Err(AutodiffError::Checkpoint(format!(
                        "{name}: expected rank-2 shape, got {other:?}"
                    )))
                }
            };
            let t = Tensor::from_vec(r, c, st.data.clone())
                .map_err(|e| AutodiffError::Checkpoint(format!("{name}: {e}")))?;
            if !t.all_finite() {
                return Err(AutodiffError::Checkpoint(format!("{name}: non-finite value")));
            }
            store.add(name.clone(), t);
        }
        if ck.params.len() != ck.order.len() {
            return Err(AutodiffError::Checkpoint("order list and parameter map differ".into()));
        }
        Ok(store)
    }
}

pub const CHECKPOINT_FORMAT: &str = "nasflat-params";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk parameter map.
///
/// ```json
/// {"format": "nasflat-params", "version": 1,
///  "order": ["name", ...],
///  "params": {"name": {"shape": [rows, cols], "data": [row-major f64...]}}}
/// ```
/// `params` is keyed in sorted order; `order` preserves registration order.
/// Values are written with shortest round-trip formatting, so a load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub order: Vec<String>,
    pub params: BTreeMap<String, StoredTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Gradients for every parameter of a store (zeros where unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store
                .values
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &Tensor) {
        self.grads[id.0].add_assign(g);
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Sums another gradient set into this one.
    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::from_vec(1, 3, vec![0.1, 1.0 / 3.0, -2.5e-308]).unwrap());
        s.add("a", Tensor::scalar(std::f64::consts::PI));
        let json = serde_json::to_string(&s.to_checkpoint()).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        let s2 = ParamStore::from_checkpoint(&back).unwrap();
        assert_eq!(s, s2);
        assert_eq!(s2.name(ParamId(0)), "w");
    }

    #[test]
    fn rejects_bad_checkpoint() {
        let mut ck = ParamStore::new().to_checkpoint();
        ck.version = 99;
        assert!(ParamStore::from_checkpoint(&ck).is_err());
    }
}
