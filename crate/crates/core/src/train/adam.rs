use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParamStore;

/// Adam hyperparameters; the moment buffers live in [`AdamState`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub step: u64,
    /// First and second moments, aligned with the parameter store order.
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, hyper: AdamHyper) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        Self {
            hyper,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected update. Gradients must be aligned with `store`.
    ///
    /// Non-finite gradients abort before anything is modified.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != self.m.len() || store.len() != self.m.len() {
            return Err(Error::dim("adam_step", &[store.len()], &[grads.len(), self.m.len()]));
        }
        for ((_, p), g) in store.iter().zip(grads) {
            if g.len() != p.numel() {
                return Err(Error::dim("adam_step", &p.shape, &[g.len()]));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(p.name.clone()));
            }
        }
        self.step += 1;
        let AdamHyper { lr, beta1, beta2, eps } = self.hyper;
        let t = self.step as f64;
        let bc1 = 1.0 - beta1.powf(t);
        let bc2 = 1.0 - beta2.powf(t);
        for (((_, p), g), (m, v)) in store.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let data = p.data_mut();
            for i in 0..data.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= k);
    }
    norm
}
