use std::collections::HashMap;

use rand::Rng;

use super::tensor::Tensor;
use super::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Param {
    name: String,
    value: Tensor,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Named trainable tensors with their Adam moments.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Names must be unique.
    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(NnError::Param(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.params.len());
        let n = value.len();
        self.params.push(Param { name: name.to_string(), value, m: vec![0.0; n], v: vec![0.0; n] });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) initialization.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Result<ParamId> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data)?)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    /// Replaces a value, keeping the shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(NnError::Shape(format!(
                "parameter {} has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = value;
        Ok(())
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// All parameter values concatenated in id order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.data().iter().copied()).collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.scalar_count() {
            return Err(NnError::Shape(format!("{} values for {} scalars", flat.len(), self.scalar_count())));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Grads {
        Grads { g: self.params.iter().map(|p| vec![0.0; p.value.len()]).collect() }
    }

    /// One Adam update with bias correction and L2 weight decay folded into
    /// the gradient.
    pub fn adam_step(&mut self, grads: &Grads, cfg: &AdamConfig) -> Result<()> {
        if grads.g.len() != self.params.len() {
            return Err(NnError::Shape(format!("{} gradients for {} parameters", grads.g.len(), self.params.len())));
        }
        for (p, g) in self.params.iter().zip(&grads.g) {
            if g.len() != p.value.len() {
                return Err(NnError::Shape(format!("gradient size mismatch for {}", p.name)));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(NnError::NonFinite(format!("gradient of {} at {i}", p.name)));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for (p, g) in self.params.iter_mut().zip(&grads.g) {
            let Param { value, m, v, .. } = p;
            for (((w, m), v), &g) in value.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                let g = g + cfg.weight_decay * *w;
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    g: Vec<Vec<f64>>,
}

impl Grads {
    pub fn add(&mut self, id: ParamId, t: &Tensor) {
        for (a, b) in self.g[id.0].iter_mut().zip(t.data()) {
            *a += b;
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.g[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.g[id.0]
    }

    pub fn add_all(&mut self, other: &Grads) {
        for (a, b) in self.g.iter_mut().zip(&other.g) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.g.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.g.concat()
    }

    pub fn norm(&self) -> f64 {
        self.g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Cosine annealing from `lr_max` at epoch 0 to `lr_min` at `total_epochs`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr_max: f64, lr_min: f64) -> Result<f64> {
    if epoch > total_epochs {
        return Err(NnError::Param(format!("epoch {epoch} beyond {total_epochs}")));
    }
    if total_epochs == 0 {
        return Ok(lr_max);
    }
    let frac = epoch as f64 / total_epochs as f64;
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos()))
}
