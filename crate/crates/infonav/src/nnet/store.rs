//! Named parameter storage and the shared-parameter contract used by the
//! asynchronous trainer: workers read consistent snapshots, updates are
//! applied atomically per named array.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::optim::RmsPropConfig;
use super::tensor::Tensor;

pub type ParamId = usize;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ParamDef {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Non-trainable entries (spectral-norm power-iteration vectors) are
    /// persisted but never receive gradient updates.
    pub trainable: bool,
}

/// Named parameter arrays plus a global version counter.
#[derive(Clone, Debug)]
pub struct ParamStore {
    defs: Vec<ParamDef>,
    values: Vec<Tensor>,
    version: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            defs: Vec::new(),
            values: Vec::new(),
            version: 0,
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor, trainable: bool) -> ParamId {
        assert!(
            self.index_of(name).is_none(),
            "duplicate parameter name {name}"
        );
        self.defs.push(ParamDef {
            name: name.to_string(),
            rows: value.rows,
            cols: value.cols,
            trainable,
        });
        self.values.push(value);
        self.defs.len() - 1
    }

    pub fn defs(&self) -> &[ParamDef] {
        &self.defs
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn set_version(&mut self, v: u64) {
        self.version = v;
    }

    pub fn index_of(&self, name: &str) -> Option<ParamId> {
        self.defs.iter().position(|d| d.name == name)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|t| t.is_finite())
    }

    pub fn grad_zeros(&self) -> GradientSet {
        GradientSet {
            grads: self
                .defs
                .iter()
                .map(|d| Tensor::zeros(d.rows, d.cols))
                .collect(),
        }
    }

    pub fn into_values(self) -> Vec<Tensor> {
        self.values
    }

    pub fn from_parts(defs: Vec<ParamDef>, values: Vec<Tensor>, version: u64) -> Self {
        assert_eq!(defs.len(), values.len());
        for (d, v) in defs.iter().zip(&values) {
            assert_eq!((d.rows, d.cols), (v.rows, v.cols), "shape mismatch for {}", d.name);
        }
        ParamStore {
            defs,
            values,
            version,
        }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient arrays aligned 1:1 with the entries of a ParamStore.
#[derive(Clone, Debug)]
pub struct GradientSet {
    pub grads: Vec<Tensor>,
}

impl GradientSet {
    pub fn accumulate(&mut self, other: &GradientSet, scale: f64) {
        debug_assert_eq!(self.grads.len(), other.grads.len());
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_scaled(b, scale);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.scale(s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().map(|g| g.sq_norm()).sum::<f64>().sqrt()
    }

    /// Scales the whole set so its global norm does not exceed `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.global_norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.is_finite())
    }
}

/// Shared parameter store for asynchronous training. Each named array has
/// its own lock, so a reader never observes a torn single array; distinct
/// arrays may come from different versions (Hogwild-style), which the
/// trainer accepts by contract.
pub struct SharedParams {
    defs: Vec<ParamDef>,
    slots: Vec<Mutex<Tensor>>,
    opt_state: Vec<Mutex<Tensor>>,
    version: AtomicU64,
}

impl SharedParams {
    pub fn from_store(store: ParamStore) -> Self {
        let version = store.version();
        let defs = store.defs().to_vec();
        let opt_state = defs
            .iter()
            .map(|d| Mutex::new(Tensor::zeros(d.rows, d.cols)))
            .collect();
        let slots = store
            .into_values()
            .into_iter()
            .map(Mutex::new)
            .collect();
        SharedParams {
            defs,
            slots,
            opt_state,
            version: AtomicU64::new(version),
        }
    }

    pub fn restore_opt_state(&self, state: Vec<Tensor>) {
        assert_eq!(state.len(), self.defs.len());
        for (slot, t) in self.opt_state.iter().zip(state) {
            *slot.lock().unwrap() = t;
        }
    }

    pub fn defs(&self) -> &[ParamDef] {
        &self.defs
    }

    pub fn version(&self) -> u64 {
        self.version.load(Ordering::SeqCst)
    }

    /// Reads a consistent per-array snapshot.
    pub fn snapshot(&self) -> ParamStore {
        let values = self
            .slots
            .iter()
            .map(|s| s.lock().unwrap().clone())
            .collect();
        ParamStore::from_parts(self.defs.clone(), values, self.version())
    }

    pub fn opt_state_snapshot(&self) -> Vec<Tensor> {
        self.opt_state
            .iter()
            .map(|s| s.lock().unwrap().clone())
            .collect()
    }

    /// RMSprop step: v <- s*v + (1-s)*g^2, p <- p - lr*g/(sqrt(v)+eps),
    /// applied per named array under that array's lock. Returns false and
    /// leaves parameters untouched when the gradient is non-finite.
    pub fn apply_rmsprop(&self, grads: &GradientSet, cfg: &RmsPropConfig) -> bool {
        if !grads.is_finite() {
            return false;
        }
        for (id, def) in self.defs.iter().enumerate() {
            if !def.trainable {
                continue;
            }
            let g = &grads.grads[id];
            let mut v = self.opt_state[id].lock().unwrap();
            let mut p = self.slots[id].lock().unwrap();
            for i in 0..g.data.len() {
                let gi = g.data[i];
                v.data[i] = cfg.smoothing * v.data[i] + (1.0 - cfg.smoothing) * gi * gi;
                p.data[i] -= cfg.lr * gi / (v.data[i].sqrt() + cfg.eps);
            }
        }
        self.version.fetch_add(1, Ordering::SeqCst);
        true
    }

    /// Runs `f` with mutable access to one named array.
    pub fn with_entry_mut<R>(&self, id: ParamId, f: impl FnOnce(&mut Tensor) -> R) -> R {
        let mut t = self.slots[id].lock().unwrap();
        f(&mut t)
    }
}
