//! Named parameter tensors for every neural module.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backend::Backend;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }
}

/// θ: module name → tensor name → tensor. Iteration order (and so the flat
/// layout) is the lexicographic order of the two keys.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore<T> {
    entries: BTreeMap<String, BTreeMap<String, Tensor<T>>>,
}

/// Lifted view of a store: the same layout, with backend values in place of
/// scalars.
#[derive(Clone, Debug)]
pub struct Lifted<V> {
    entries: BTreeMap<String, BTreeMap<String, Vec<V>>>,
    flat: Vec<V>,
}

impl<V: Copy> Lifted<V> {
    pub fn tensor(&self, module: &str, name: &str) -> Option<&[V]> {
        self.entries
            .get(module)
            .and_then(|m| m.get(name))
            .map(|v| v.as_slice())
    }

    /// All lifted values in the store's flat order.
    pub fn leaves(&self) -> &[V] {
        &self.flat
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn entry_map(&self) -> &BTreeMap<String, BTreeMap<String, Vec<V>>> {
        &self.entries
    }
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, module: &str, name: &str, tensor: Tensor<T>) {
        self.entries
            .entry(module.to_string())
            .or_default()
            .insert(name.to_string(), tensor);
    }

    pub fn get(&self, module: &str, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(module).and_then(|m| m.get(name))
    }

    pub fn get_mut(&mut self, module: &str, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.get_mut(module).and_then(|m| m.get_mut(name))
    }

    pub fn modules(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    /// Total scalar count.
    pub fn len(&self) -> usize {
        self.entries
            .values()
            .flat_map(|m| m.values())
            .map(|t| t.data.len())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.entries
            .values()
            .flat_map(|m| m.values())
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }

    /// Overwrites all values from a flat vector; shapes are untouched.
    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::Shape(format!(
                "flat vector has {} values, store has {}",
                flat.len(),
                self.len()
            )));
        }
        let mut off = 0;
        for t in self.entries.values_mut().flat_map(|m| m.values_mut()) {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn with_flat(&self, flat: &[T]) -> Result<Self> {
        let mut out = self.clone();
        out.set_flat(flat)?;
        Ok(out)
    }

    /// Lifts every scalar into `backend` via `make`.
    pub fn lift_with<B: Backend<T>>(
        &self,
        backend: &mut B,
        mut make: impl FnMut(&mut B, T) -> B::V,
    ) -> Lifted<B::V> {
        let mut entries = BTreeMap::new();
        let mut flat = Vec::with_capacity(self.len());
        for (module, tensors) in &self.entries {
            let mut lifted = BTreeMap::new();
            for (name, t) in tensors {
                let vs: Vec<B::V> = t.data.iter().map(|&x| make(backend, x)).collect();
                flat.extend_from_slice(&vs);
                lifted.insert(name.clone(), vs);
            }
            entries.insert(module.clone(), lifted);
        }
        Lifted { entries, flat }
    }

    /// Every parameter becomes a leaf node, row-major within each tensor.
    pub fn lift(&self, tape: &mut Tape<T>) -> Lifted<Var> {
        self.lift_with(tape, |t, x| t.leaf(x))
    }

    /// Parameters as constants of a primal-only backend.
    pub fn lift_values<B: Backend<T>>(&self, backend: &mut B) -> Lifted<B::V> {
        self.lift_with(backend, |b, x| b.constant(x))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut modules = BTreeMap::new();
        for (module, tensors) in &self.entries {
            let mut out = BTreeMap::new();
            for (name, t) in tensors {
                out.insert(
                    name.clone(),
                    TensorRecord {
                        shape: t.shape.clone(),
                        data: t.data.iter().map(|x| x.as_f64()).collect(),
                    },
                );
            }
            modules.insert(module.clone(), out);
        }
        Checkpoint(modules)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut store = Self::new();
        for (module, tensors) in &ck.0 {
            for (name, rec) in tensors {
                let data = rec
                    .data
                    .iter()
                    .map(|&x| {
                        if x.is_finite() {
                            Ok(T::lit(x))
                        } else {
                            Err(Error::Numeric(format!("{module}.{name} holds {x}")))
                        }
                    })
                    .collect::<Result<Vec<T>>>()?;
                store.insert(module, name, Tensor::new(rec.shape.clone(), data)?);
            }
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_checkpoint())?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        Self::from_checkpoint(&ck)
    }

    /// True when both stores have the same modules, tensors and shapes.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|((ma, ta), (mb, tb))| {
                ma == mb
                    && ta.len() == tb.len()
                    && ta
                        .iter()
                        .zip(tb)
                        .all(|((na, a), (nb, b))| na == nb && a.shape == b.shape)
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// On-disk checkpoint: `{module: {tensor: {shape, data}}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Checkpoint(pub BTreeMap<String, BTreeMap<String, TensorRecord>>);
