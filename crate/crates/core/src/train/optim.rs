use serde::{Deserialize, Serialize};

use crate::nn::{AdamState, EncoderParams, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
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

pub struct Adam {
    cfg: AdamConfig,
    state: AdamState,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &EncoderParams) -> Self {
        let zeros = |p: &EncoderParams| p.tensors().map(|t| vec![0.0; t.len()]).collect();
        Self { cfg, state: AdamState { step: 0, m: zeros(params), v: zeros(params) } }
    }

    pub fn resume(cfg: AdamConfig, state: AdamState) -> Self {
        Self { cfg, state }
    }

    pub fn state(&self) -> &AdamState {
        &self.state
    }

    /// One bias-corrected update; `grads` follow [`EncoderParams::tensors`] order.
    pub fn step(&mut self, params: &mut EncoderParams, grads: &[Tensor], lr: f64) {
        self.state.step += 1;
        let t = self.state.step as i32;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (k, (p, g)) in params.tensors_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.state.m[k], &mut self.state.v[k]);
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + self.cfg.eps);
            }
        }
    }
}
