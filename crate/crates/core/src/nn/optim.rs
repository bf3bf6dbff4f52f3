use serde::{Deserialize, Serialize};

use super::Tensor;

/// A trainable weight matrix with its gradient buffer and Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub value: Tensor,
    #[serde(skip, default = "Tensor::empty")]
    pub grad: Tensor,
    #[serde(skip, default = "Tensor::empty")]
    adam_m: Tensor,
    #[serde(skip, default = "Tensor::empty")]
    adam_v: Tensor,
    #[serde(skip)]
    step_count: u64,
}

impl Tensor {
    fn empty() -> Tensor {
        Tensor::zeros(0, 0)
    }
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Tensor::zeros(r, c),
            adam_m: Tensor::zeros(r, c),
            adam_v: Tensor::zeros(r, c),
            step_count: 0,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Restores optimizer buffers after deserialization, where they are skipped.
    pub(crate) fn reset_state(&mut self) {
        *self = Parameter::new(self.value.clone());
    }
}

/// Adam hyperparameters. Defaults are the usual 0.9 / 0.999 / 1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    pub fn step(&self, param: &mut Parameter) {
        adam_step(param, self.lr, self.beta1, self.beta2, self.eps);
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Consumes and zeroes `param.grad`.
pub fn adam_step(param: &mut Parameter, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    param.step_count += 1;
    let t = param.step_count as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    let values = param.value.data_mut();
    let grads = param.grad.data_mut();
    let ms = param.adam_m.data_mut();
    let vs = param.adam_v.data_mut();
    for i in 0..values.len() {
        let g = grads[i];
        ms[i] = beta1 * ms[i] + (1.0 - beta1) * g;
        vs[i] = beta2 * vs[i] + (1.0 - beta2) * g * g;
        let m_hat = ms[i] / bias1;
        let v_hat = vs[i] / bias2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        grads[i] = 0.0;
    }
}
