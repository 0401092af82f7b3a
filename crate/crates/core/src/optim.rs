//! AdamW with decoupled weight decay, and the warmup + cosine learning-rate
//! schedule.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamW {
    /// Zero moments for parameters of the given shapes, betas (0.9, 0.999)
    /// and eps 1e-8.
    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>, weight_decay: f64) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = shapes
            .into_iter()
            .map(|(r, c)| (Matrix::zeros(r, c), Matrix::zeros(r, c)))
            .unzip();
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m,
            v,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. `decays[k]` says whether parameter `k` receives weight
    /// decay; decay shrinks by `lr·weight_decay` before the adaptive step.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], decays: &[bool], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() || decays.len() != self.m.len() {
            return Err(Error::Validation(format!(
                "optimizer tracks {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[k].shape() || g.shape() != self.m[k].shape() {
                return Err(Error::Dimension {
                    op: "adamw_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for k in 0..params.len() {
            let shrink = if decays[k] { 1.0 - lr * self.weight_decay } else { 1.0 };
            let p = params[k].data_mut();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (((pi, &gi), mi), vi) in p.iter_mut().zip(grads[k].data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi = *pi * shrink - lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Linear warmup from 0 over `warmup` epochs, then cosine decay from
/// `base_lr` to 0 at `epochs`.
pub fn lr_at(base_lr: f64, warmup: usize, epochs: usize, epoch: usize) -> f64 {
    if epoch < warmup {
        return base_lr * epoch as f64 / warmup as f64;
    }
    if epochs <= warmup {
        return base_lr;
    }
    let progress = (epoch - warmup) as f64 / (epochs - warmup) as f64;
    base_lr * 0.5 * (1.0 + (PI * progress.min(1.0)).cos())
}
