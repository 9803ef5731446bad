use std::collections::HashMap;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// A trainable tensor with its gradient slot and Adam moments.
#[derive(Clone, Debug)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Param {
    fn new(value: Tensor) -> Self {
        let n = value.len();
        Self {
            grad: Tensor::zeros(value.shape()),
            value,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        }
    }
}

/// Named parameters in insertion order. Iteration order is stable, which keeps
/// checkpoints byte-reproducible.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    index: HashMap<String, usize>,
    params: Vec<Param>,
    step: u64,
    adam: AdamConfig,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.params[i] = Param::new(value);
            return;
        }
        self.index.insert(name.clone(), self.params.len());
        self.names.push(name);
        self.params.push(Param::new(value));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn param(&self, name: &str) -> &Param {
        match self.index.get(name) {
            Some(&i) => &self.params[i],
            None => panic!("unknown parameter {name}"),
        }
    }

    pub fn param_mut(&mut self, name: &str) -> &mut Param {
        match self.index.get(name) {
            Some(&i) => &mut self.params[i],
            None => panic!("unknown parameter {name}"),
        }
    }

    pub fn value(&self, name: &str) -> &Tensor {
        &self.param(name).value
    }

    /// Adds `delta` into the named gradient slot.
    pub fn accumulate(&mut self, name: &str, delta: &Tensor) -> Result<()> {
        self.param_mut(name).grad.add_assign(delta)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.names.iter().map(String::as_str).zip(self.params.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// One bias-corrected Adam update over every parameter, then clears the
    /// gradients. Fails without touching anything if a gradient is not finite.
    pub fn adam_step(&mut self, lr: f64) -> Result<()> {
        if let Some((name, _)) = self.iter().find(|(_, p)| p.grad.ensure_finite("").is_err()) {
            return Err(Error::Invalid(format!("non-finite gradient in {name}")));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.adam;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for p in &mut self.params {
            let Param { value, grad, first_moment, second_moment } = p;
            for (((w, g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(first_moment.iter_mut())
                .zip(second_moment.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
            grad.fill(0.0);
        }
        Ok(())
    }
}

/// Step-decay schedule: `initial * factor^(epoch / every)`.
pub fn step_decay_lr(initial: f64, factor: f64, every: usize, epoch: usize) -> f64 {
    initial * factor.powi((epoch / every.max(1)) as i32)
}
