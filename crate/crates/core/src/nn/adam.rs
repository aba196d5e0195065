//! Named parameter store with Adam state.
//!
//! One store owns every trainable tensor plus its first/second Adam moments
//! and the shared step counter. Rollout and evaluation code reads values
//! through a snapshot of the store; only the update phase writes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::graph::{Gradients, Graph};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone)]
struct ParamEntry {
    name: String,
    value: Tensor,
    m: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    by_name: HashMap<String, ParamId>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::validation(format!("duplicate parameter {name}")));
        }
        let id = ParamId(self.entries.len());
        let len = value.len();
        self.entries.push(ParamEntry {
            name: name.clone(),
            value,
            m: vec![0.0; len],
            v: vec![0.0; len],
        });
        self.by_name.insert(name, id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        if value.shape() != self.entries[id.0].value.shape() {
            return Err(Error::Shape(format!(
                "set_value shape mismatch for {}",
                self.entries[id.0].name
            )));
        }
        self.entries[id.0].value = value;
        Ok(())
    }

    /// Flatten every parameter into one vector (checkpoint/grad-check order:
    /// parameter id order, row-major within each tensor).
    pub fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_scalars());
        for e in &self.entries {
            out.extend_from_slice(e.value.as_slice());
        }
        out
    }

    pub fn load_flat_values(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_scalars() {
            return Err(Error::Shape(format!(
                "flat vector has {} values, store holds {}",
                flat.len(),
                self.n_scalars()
            )));
        }
        let mut offset = 0;
        for e in &mut self.entries {
            let (r, c) = e.value.shape();
            let len = e.value.len();
            e.value = Tensor::new(r, c, flat[offset..offset + len].to_vec())?;
            offset += len;
        }
        Ok(())
    }

    /// One bias-corrected Adam step over all parameters with accumulated
    /// gradients. Parameters without gradient stay untouched (their moments
    /// still decay is NOT applied — an absent gradient means the parameter
    /// took no part in the loss).
    pub fn adam_step(&mut self, grads: &GradAccum, cfg: &AdamConfig) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient in adam_step".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (entry, grad) in self.entries.iter_mut().zip(&grads.grads) {
            if grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            let data = entry.value.make_mut();
            for i in 0..data.len() {
                let g = grad[i];
                entry.m[i] = cfg.beta1 * entry.m[i] + (1.0 - cfg.beta1) * g;
                entry.v[i] = cfg.beta2 * entry.v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = entry.m[i] / bc1;
                let v_hat = entry.v[i] / bc2;
                data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    /// Named tensors for checkpointing. With `include_optimizer_state`, Adam
    /// moments and the step counter ride along under reserved names.
    pub fn to_named_tensors(&self, include_optimizer_state: bool) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .entries
            .iter()
            .map(|e| (e.name.clone(), e.value.clone()))
            .collect();
        if include_optimizer_state {
            for e in &self.entries {
                let (r, c) = e.value.shape();
                out.push((
                    format!("__adam_m__/{}", e.name),
                    Tensor::new(r, c, e.m.clone()).unwrap(),
                ));
                out.push((
                    format!("__adam_v__/{}", e.name),
                    Tensor::new(r, c, e.v.clone()).unwrap(),
                ));
            }
            out.push(("__adam_step__".to_string(), Tensor::scalar(self.step as f64)));
        }
        out
    }

    /// Restore values (and optimizer state when present) from named tensors.
    /// Every parameter in the store must be present with a matching shape.
    pub fn restore_named_tensors(&mut self, tensors: &[(String, Tensor)]) -> Result<()> {
        let by_name: HashMap<&str, &Tensor> =
            tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for e in &mut self.entries {
            let t = by_name.get(e.name.as_str()).ok_or_else(|| {
                Error::Checkpoint(format!("missing parameter {} in checkpoint", e.name))
            })?;
            if t.shape() != e.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    e.name,
                    t.shape(),
                    e.value.shape()
                )));
            }
            e.value = (*t).clone();
            if let Some(m) = by_name.get(format!("__adam_m__/{}", e.name).as_str()) {
                e.m = m.as_slice().to_vec();
            }
            if let Some(v) = by_name.get(format!("__adam_v__/{}", e.name).as_str()) {
                e.v = v.as_slice().to_vec();
            }
        }
        if let Some(step) = by_name.get("__adam_step__") {
            self.step = step.item() as u64;
        }
        Ok(())
    }
}

/// Dense gradient accumulator matching the store's parameters.
pub struct GradAccum {
    grads: Vec<Vec<f64>>,
}

impl GradAccum {
    pub fn new(store: &ParamStore) -> Self {
        GradAccum {
            grads: store.entries.iter().map(|e| vec![0.0; e.value.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Add `scale` times the parameter gradients of one backward pass.
    pub fn add_from_graph(&mut self, graph: &Graph, grads: &Gradients, scale: f64) {
        for &(pid, node) in graph.param_nodes() {
            if let Some(g) = grads.node(node) {
                let dst = &mut self.grads[pid.0];
                for (d, &gv) in dst.iter_mut().zip(g) {
                    *d += scale * gv;
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|x| x.is_finite()))
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    /// Flattened gradient in store order; mirrors `ParamStore::flat_values`.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.grads {
            out.extend_from_slice(g);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::row(vec![1.0, -2.0])).unwrap();
        let grads = GradAccum::new(&store);
        store.adam_step(&grads, &AdamConfig::default()).unwrap();
        assert_eq!(
            store.value(store.id("w").unwrap()).as_slice(),
            &[1.0, -2.0]
        );
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // Bias-corrected Adam's first step is lr * g / (|g| + eps').
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(0.5)).unwrap();
        let mut grads = GradAccum::new(&store);
        grads.grads[0][0] = 1.0;
        store
            .adam_step(&grads, &AdamConfig { lr: 0.1, ..AdamConfig::default() })
            .unwrap();
        let new = store.value(w).item();
        assert!((new - 0.4).abs() < 1e-6, "got {new}");
    }

    #[test]
    fn deterministic_across_runs() {
        let run = || {
            let mut store = ParamStore::new();
            store.add("w", Tensor::row(vec![0.3, 0.7])).unwrap();
            let mut grads = GradAccum::new(&store);
            grads.grads[0][0] = 0.25;
            grads.grads[0][1] = -0.5;
            for _ in 0..10 {
                store.adam_step(&grads, &AdamConfig::default()).unwrap();
            }
            store.flat_values()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(0.5)).unwrap();
        let mut grads = GradAccum::new(&store);
        grads.grads[0][0] = f64::NAN;
        assert!(store.adam_step(&grads, &AdamConfig::default()).is_err());
    }

    #[test]
    fn optimizer_state_round_trips() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::row(vec![1.0, 2.0])).unwrap();
        let mut grads = GradAccum::new(&store);
        grads.grads[0][0] = 0.5;
        grads.grads[0][1] = -0.5;
        store.adam_step(&grads, &AdamConfig::default()).unwrap();
        let saved = store.to_named_tensors(true);

        let mut other = ParamStore::new();
        other.add("w", Tensor::row(vec![0.0, 0.0])).unwrap();
        other.restore_named_tensors(&saved).unwrap();
        assert_eq!(other.step(), store.step());

        // One more identical step on both must agree bitwise.
        store.adam_step(&grads, &AdamConfig::default()).unwrap();
        other.adam_step(&grads, &AdamConfig::default()).unwrap();
        assert_eq!(store.flat_values(), other.flat_values());
    }
}
