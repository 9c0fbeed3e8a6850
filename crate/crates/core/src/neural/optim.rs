use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub max_iter: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn paper(seed: u64) -> Self {
        Self { base_lr: 5e-5, momentum: 0.9, lr_step: 40_000, lr_gamma: 0.1, max_iter: 120_000, batch_size: 32, seed }
    }

    /// Desk-scale schedule for the toy network. The small net on
    /// z-scored inputs tolerates a far larger step than the full model.
    pub fn toy(seed: u64) -> Self {
        Self { base_lr: 0.002, momentum: 0.9, lr_step: 400, lr_gamma: 0.1, max_iter: 600, batch_size: 8, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.base_lr > 0.0
            && self.base_lr.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.lr_gamma > 0.0
            && self.lr_gamma <= 1.0
            && self.batch_size >= 1
            && self.lr_step >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("train config {self:?}")))
        }
    }
}

/// `base_lr * gamma^floor(iter / step)`.
pub fn lr_at(iter: usize, config: &TrainConfig) -> f64 {
    config.base_lr * config.lr_gamma.powi((iter / config.lr_step.max(1)) as i32)
}

/// `v <- momentum * v - lr * g; w <- w + v`.
pub fn sgd_momentum_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::ShapeMismatch(format!(
            "sgd over {} params, {} grads, {} velocities",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for ((w, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * g;
        *w += *v;
    }
    Ok(())
}
