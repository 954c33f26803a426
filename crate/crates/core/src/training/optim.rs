//! Adam and the step-decay learning-rate schedule.

use crate::error::{Error, Result, TensorError};
use crate::tensor::Tensor;

pub const BASE_LR: f64 = 0.001;
pub const LR_DECAY: f64 = 0.8;
pub const LR_DECAY_EVERY: usize = 20;

/// `base_lr · decay^floor(epoch / every)`.
pub fn lr_schedule(epoch: usize, base_lr: f64, decay: f64, every: usize) -> f64 {
    base_lr * decay.powi((epoch / every.max(1)) as i32)
}

/// The default schedule: 0.001, decayed to 80% every 20 epochs.
pub fn lr_at_epoch(epoch: usize) -> f64 {
    lr_schedule(epoch, BASE_LR, LR_DECAY, LR_DECAY_EVERY)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments congruent with `params`.
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Vec<f64>], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Config(format!(
            "adam: {} parameters, {} gradients, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.numel() != g.len() || p.numel() != state.m[i].len() {
            return Err(
                TensorError::ShapeMismatch { op: "adam_step", lhs: p.shape().to_vec(), rhs: vec![g.len()] }.into()
            );
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *x -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
