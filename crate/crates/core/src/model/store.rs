//! Named parameter registry backing every network.
//!
//! Layers register their tensors here under dotted names
//! ("layer2.3.conv1.weight"). Each entry is a [`Var`] so the optimizer can
//! update it in place, plus a `trainable` flag separating learned weights
//! from running statistics. The map is ordered, which makes checkpoint
//! files and weight caches byte-stable across runs.

use std::collections::{BTreeMap, HashMap};

use candle_core::{Device, Tensor, Var};

use crate::{Error, Result};

struct Entry {
    var: Var,
    trainable: bool,
}

pub(crate) struct ParamStore {
    device: Device,
    entries: BTreeMap<String, Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            device: Device::Cpu,
            entries: BTreeMap::new(),
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, init: Tensor, trainable: bool) -> Result<Var> {
        if self.entries.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let var = Var::from_tensor(&init)?;
        self.entries.insert(
            name.to_string(),
            Entry {
                var: var.clone(),
                trainable,
            },
        );
        Ok(var)
    }

    /// Register a learned parameter. The returned tensor shares storage with
    /// the stored [`Var`], so optimizer updates are visible to the layer
    /// holding it.
    pub fn param(&mut self, name: &str, init: Tensor) -> Result<Tensor> {
        Ok(self.insert(name, init, true)?.as_tensor().clone())
    }

    /// Register a non-learned buffer (running statistics). Returns the `Var`
    /// itself because buffers are written by the layer during training.
    pub fn buffer(&mut self, name: &str, init: Tensor) -> Result<Var> {
        self.insert(name, init, false)
    }

    /// Learned parameters whose name satisfies `keep`, in name order.
    pub fn trainable_where(&self, keep: impl Fn(&str) -> bool) -> Vec<Var> {
        self.entries
            .iter()
            .filter(|(name, e)| e.trainable && keep(name))
            .map(|(_, e)| e.var.clone())
            .collect()
    }

    pub fn trainable_vars(&self) -> Vec<Var> {
        self.trainable_where(|_| true)
    }

    /// Element count of learned parameters (buffers excluded).
    pub fn parameter_count(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.trainable)
            .map(|e| e.var.as_tensor().elem_count())
            .sum()
    }

    /// Snapshot of every entry (parameters and buffers) by name. The tensors
    /// share storage with the live model; copy before mutating.
    pub fn tensor_map(&self) -> BTreeMap<String, Tensor> {
        self.entries
            .iter()
            .map(|(name, e)| (name.clone(), e.var.as_tensor().clone()))
            .collect()
    }

    /// Overwrite every entry whose name satisfies `subset` from `source`.
    ///
    /// Strict in both directions: a selected entry missing from `source` and
    /// a `source` key that is not a selected entry are both errors, as is a
    /// shape mismatch. Returns the number of tensors written.
    pub fn load_named(
        &mut self,
        source: &HashMap<String, Tensor>,
        subset: impl Fn(&str) -> bool,
    ) -> Result<usize> {
        for key in source.keys() {
            let known = self.entries.contains_key(key) && subset(key);
            if !known {
                return Err(Error::Config(format!(
                    "weight file contains unexpected tensor {key:?}"
                )));
            }
        }
        let mut written = 0;
        for (name, entry) in &self.entries {
            if !subset(name) {
                continue;
            }
            let tensor = source
                .get(name)
                .ok_or_else(|| Error::Config(format!("weight file is missing tensor {name:?}")))?;
            entry.var.set(tensor).map_err(|e| {
                Error::Config(format!("cannot load tensor {name:?}: {e}"))
            })?;
            written += 1;
        }
        Ok(written)
    }
}
