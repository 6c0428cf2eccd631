use serde::{Deserialize, Serialize};

use super::{Objective, OptimError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates and step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }
}

/// `n_iters` bias-corrected Adam steps on `theta` in place. Returns the loss
/// at the final parameters.
pub fn adam_run<O: Objective>(
    objective: &mut O,
    theta: &mut [f64],
    n_iters: usize,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<f64, OptimError> {
    for iteration in 0..n_iters {
        let (loss, g) = objective.evaluate(theta)?;
        if !loss.is_finite() {
            return Err(OptimError::NonFinite { iteration, loss });
        }
        state.t += 1;
        let c1 = 1.0 - config.beta1.powi(state.t as i32);
        let c2 = 1.0 - config.beta2.powi(state.t as i32);
        for i in 0..theta.len() {
            state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g[i];
            state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g[i] * g[i];
            let m_hat = state.m[i] / c1;
            let v_hat = state.v[i] / c2;
            theta[i] -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    let (loss, _) = objective.evaluate(theta)?;
    if !loss.is_finite() {
        return Err(OptimError::NonFinite { iteration: n_iters, loss });
    }
    Ok(loss)
}
