//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::model::EcnParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 penalty folded into the gradient; 0 disables it.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &EcnParams) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.data.len()])
            .collect();
        AdamState {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

/// One in-place update of `params`.
pub fn adam_step(
    params: &mut EcnParams,
    grads: &EcnParams,
    state: &mut AdamState,
    lr: f64,
    config: &AdamConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    let grads = grads.tensors();
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(&grads)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        debug_assert_eq!(p.name, g.name);
        for (((w, &gi), mi), vi) in p.data.iter_mut().zip(g.data).zip(m).zip(v) {
            let gi = gi + config.weight_decay * *w;
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * gi;
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
}
