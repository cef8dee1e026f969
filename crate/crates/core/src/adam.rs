//! Adam with decoupled weight decay.

use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: `theta *= 1 - lr * weight_decay` before the Adam
    /// update, for parameters flagged as decaying.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// A parameter tensor handed to [`AdamState::step`].
pub struct ParamSlot<'a> {
    pub name: &'a str,
    pub value: &'a mut Tensor,
    pub grad: &'a Tensor,
    pub decay: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    /// Zero moments for parameters of the given shapes.
    pub fn new(config: AdamConfig, shapes: &[(usize, usize)]) -> Self {
        AdamState {
            config,
            m: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of every slot. Slots must come in the order the state was
    /// created with. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, slots: &mut [ParamSlot<'_>]) -> Result<()> {
        if slots.len() != self.m.len() {
            return Err(Error::shape("adam_step", (self.m.len(), 1), (slots.len(), 1)));
        }
        for (slot, m) in slots.iter().zip(&self.m) {
            if slot.value.shape() != m.shape() || slot.grad.shape() != m.shape() {
                return Err(Error::shape("adam_step", m.shape(), slot.grad.shape()));
            }
            if !slot.grad.is_finite() {
                return Err(Error::NonFiniteGradient(slot.name.to_string()));
            }
        }

        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bias1 = 1.0 - libm::pow(beta1, self.t as f64);
        let bias2 = 1.0 - libm::pow(beta2, self.t as f64);

        for ((slot, m), v) in slots.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let decay = if slot.decay { 1.0 - lr * weight_decay } else { 1.0 };
            let params = slot.value.data_mut();
            for (((p, &g), m), v) in params
                .iter_mut()
                .zip(slot.grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p = *p * decay - lr * m_hat / (math::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}
