use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};

/// Index of a trainable tensor inside a [`ParameterStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct ParamEntry {
    pub(crate) name: String,
    pub(crate) value: Tensor,
    pub(crate) grad: Tensor,
    pub(crate) m: Tensor,
    pub(crate) v: Tensor,
}

/// Named trainable tensors together with their Adam moments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    pub(crate) entries: Vec<ParamEntry>,
    pub(crate) step: u64,
    #[serde(skip)]
    index: BTreeMap<String, ParamId>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId, TensorError> {
        if self.index.contains_key(name) {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        let [r, c] = value.shape();
        let id = ParamId(self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad: Tensor::zeros(r, c),
            m: Tensor::zeros(r, c),
            v: Tensor::zeros(r, c),
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Adds a `rows×cols` tensor drawn from `U(-bound, bound)`.
    pub fn insert_uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut R,
    ) -> Result<ParamId, TensorError> {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        self.insert(name, Tensor::new(rows, cols, data)?)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    /// Adam steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Adds a gradient buffer into the stored gradients.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (entry, g) in self.entries.iter_mut().zip(&grads.slots) {
            if let Some(g) = g {
                entry.grad.add_assign(g);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    /// One Adam update with the default moment constants and bias correction;
    /// gradients are zeroed afterwards.
    pub fn adam_step(&mut self, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for e in &mut self.entries {
            let g = e.grad.data();
            let m = e.m.data_mut();
            for (mi, gi) in m.iter_mut().zip(g) {
                *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
            }
            let v = e.v.data_mut();
            for (vi, gi) in v.iter_mut().zip(g) {
                *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
            }
            let (m, v) = (e.m.data(), e.v.data());
            for ((w, mi), vi) in e.value.data_mut().iter_mut().zip(m).zip(v) {
                let m_hat = mi / c1;
                let v_hat = vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
            e.grad.fill(0.0);
        }
    }

    pub(crate) fn rebuild_index(&mut self) -> Result<(), TensorError> {
        self.index.clear();
        for (i, e) in self.entries.iter().enumerate() {
            let shape = e.value.shape();
            if e.grad.shape() != shape || e.m.shape() != shape || e.v.shape() != shape {
                return Err(TensorError::CorruptStore(format!(
                    "buffers of `{}` do not match its shape",
                    e.name
                )));
            }
            if self.index.insert(e.name.clone(), ParamId(i)).is_some() {
                return Err(TensorError::DuplicateParam(e.name.clone()));
            }
        }
        Ok(())
    }

    /// Max absolute difference of values against another store with the same layout.
    pub fn max_abs_diff(&self, other: &ParameterStore) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .flat_map(|(a, b)| a.value.data().iter().zip(b.value.data()))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-parameter gradient buffer produced by one backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    slots: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn new(num_params: usize) -> Self {
        Self {
            slots: vec![None; num_params],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    pub(crate) fn add(&mut self, id: ParamId, g: &Tensor) {
        match &mut self.slots[id.0] {
            Some(acc) => acc.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (slot, o) in self.slots.iter_mut().zip(&other.slots) {
            let Some(o) = o else { continue };
            match slot {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(o.data()) {
                        *a += scale * b;
                    }
                }
                None => {
                    let mut t = o.clone();
                    t.data_mut().iter_mut().for_each(|x| *x *= scale);
                    *slot = Some(t);
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.slots.iter_mut().flatten() {
            t.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Flattened gradient in parameter order; absent slots are zeros of the given shapes.
    pub fn flatten(&self, store: &ParameterStore) -> Vec<f64> {
        let mut out = Vec::with_capacity(store.num_scalars());
        for id in store.ids() {
            match self.get(id) {
                Some(g) => out.extend_from_slice(g.data()),
                None => out.extend(std::iter::repeat_n(0.0, store.value(id).len())),
            }
        }
        out
    }

    pub fn is_all_zero(&self) -> bool {
        self.slots
            .iter()
            .flatten()
            .all(|t| t.data().iter().all(|x| *x == 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(w: f64) -> (ParameterStore, ParamId) {
        let mut s = ParameterStore::new();
        let id = s.insert("w", Tensor::scalar(w)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_grads_leave_parameters_unchanged() {
        let (mut s, id) = scalar_store(0.7);
        s.adam_step(1e-3);
        assert_eq!(s.value(id).data(), &[0.7]);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps).
        let (mut s, id) = scalar_store(0.0);
        let mut g = Gradients::new(1);
        g.add(id, &Tensor::scalar(1.0));
        s.accumulate(&g);
        s.adam_step(1e-3);
        let expected = -1e-3 / (1.0 + ADAM_EPS);
        assert!((s.value(id).data()[0] - expected).abs() < 1e-15);
        assert_eq!(s.grad(id).data(), &[0.0]);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let (mut s, id) = scalar_store(0.0);
        for _ in 0..2000 {
            let w = s.value(id).data()[0];
            let mut g = Gradients::new(1);
            g.add(id, &Tensor::scalar(2.0 * (w - 3.0)));
            s.accumulate(&g);
            s.adam_step(1e-2);
        }
        assert!((s.value(id).data()[0] - 3.0).abs() < 1e-2);
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut s, _) = scalar_store(0.0);
        assert!(s.insert("w", Tensor::scalar(1.0)).is_err());
    }
}
