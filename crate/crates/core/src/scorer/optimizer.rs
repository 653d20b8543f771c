//! AdamW with decoupled weight decay.
//!
//! Per parameter: `m <- b1*m + (1-b1)*g`, `v <- b2*v + (1-b2)*g^2`, bias
//! correction by `1 - b^t`, then
//! `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)`.

use serde::{Deserialize, Serialize};

use crate::scorer::{Gradients, ModelParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 2e-8,
            learning_rate: 1e-3,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub tstep: u64,
    pub(crate) m: Gradients,
    pub(crate) v: Gradients,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, config: AdamWConfig) -> Self {
        OptimizerState {
            config,
            tstep: 0,
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
        }
    }
}

fn update_block(
    name: &str,
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    cfg: &AdamWConfig,
    bc1: f64,
    bc2: f64,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{name}: {} parameters vs {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if !g.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient in {name}[{i}]: {g}")));
        }
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -=
            cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.epsilon) + cfg.weight_decay * params[i]);
    }
    Ok(())
}

/// One AdamW update over every parameter block.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<()> {
    adamw_step_filtered(params, grads, state, false)
}

/// Like [`adamw_step`], but with `freeze_occupancy` the MLP blocks
/// (w1..b3) are skipped entirely: no moment update and no weight decay.
pub fn adamw_step_filtered(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut OptimizerState,
    freeze_occupancy: bool,
) -> Result<()> {
    state.tstep += 1;
    let cfg = state.config;
    let t = state.tstep as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    if !freeze_occupancy {
        update_block("w1", &mut params.w1, &grads.w1, &mut state.m.w1, &mut state.v.w1, &cfg, bc1, bc2)?;
        update_block("b1", &mut params.b1, &grads.b1, &mut state.m.b1, &mut state.v.b1, &cfg, bc1, bc2)?;
        update_block("w2", &mut params.w2, &grads.w2, &mut state.m.w2, &mut state.v.w2, &cfg, bc1, bc2)?;
        update_block("b2", &mut params.b2, &grads.b2, &mut state.m.b2, &mut state.v.b2, &cfg, bc1, bc2)?;
        update_block("w3", &mut params.w3, &grads.w3, &mut state.m.w3, &mut state.v.w3, &cfg, bc1, bc2)?;
        update_block("b3", &mut params.b3, &grads.b3, &mut state.m.b3, &mut state.v.b3, &cfg, bc1, bc2)?;
    }
    update_block("ws", &mut params.ws, &grads.ws, &mut state.m.ws, &mut state.v.ws, &cfg, bc1, bc2)?;

    if !grads.bs.is_finite() {
        return Err(Error::Numeric(format!("non-finite gradient in bs: {}", grads.bs)));
    }
    state.m.bs = cfg.beta1 * state.m.bs + (1.0 - cfg.beta1) * grads.bs;
    state.v.bs = cfg.beta2 * state.v.bs + (1.0 - cfg.beta2) * grads.bs * grads.bs;
    let m_hat = state.m.bs / bc1;
    let v_hat = state.v.bs / bc2;
    params.bs -=
        cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.epsilon) + cfg.weight_decay * params.bs);
    Ok(())
}
