//! SGD and Adam parameter updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::ParamVector;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Whether a step moves against the gradient (descent) or along it (ascent).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descent,
    Ascent,
}

/// Optimizer selector used in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimKind {
    Sgd,
    Adam,
}

/// Optimizer with its mutable state (Adam moments, step counter).
#[derive(Debug, Clone)]
pub enum OptimizerState {
    Sgd {
        learning_rate: f64,
    },
    Adam {
        learning_rate: f64,
        first_moment: Vec<f64>,
        second_moment: Vec<f64>,
        step: u64,
    },
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerState::Sgd { learning_rate }
    }

    pub fn adam(learning_rate: f64, param_len: usize) -> Self {
        OptimizerState::Adam {
            learning_rate,
            first_moment: vec![0.0; param_len],
            second_moment: vec![0.0; param_len],
            step: 0,
        }
    }

    pub fn new(kind: OptimKind, learning_rate: f64, param_len: usize) -> Self {
        match kind {
            OptimKind::Sgd => OptimizerState::sgd(learning_rate),
            OptimKind::Adam => OptimizerState::adam(learning_rate, param_len),
        }
    }
}

/// One optimizer update.
///
/// SGD: `params -/+ lr * grad`. Adam: bias-corrected moment estimates with
/// beta1 = 0.9, beta2 = 0.999, eps = 1e-8. A non-finite gradient is a hard
/// failure so numerical blow-ups surface at the step that produced them.
pub fn optimizer_step(
    state: &mut OptimizerState,
    params: &ParamVector,
    grad: &ParamVector,
    direction: Direction,
) -> Result<ParamVector> {
    if params.len() != grad.len() {
        return Err(Error::Config(format!(
            "optimizer_step: length mismatch ({} vs {})",
            params.len(),
            grad.len()
        )));
    }
    if !grad.is_finite() {
        return Err(Error::Numerical(
            "optimizer_step: non-finite gradient".into(),
        ));
    }
    let sign = match direction {
        Direction::Descent => -1.0,
        Direction::Ascent => 1.0,
    };
    let mut out = params.clone();
    match state {
        OptimizerState::Sgd { learning_rate } => {
            let lr = *learning_rate;
            for (p, g) in out.as_mut_slice().iter_mut().zip(grad.iter()) {
                *p += sign * lr * g;
            }
        }
        OptimizerState::Adam {
            learning_rate,
            first_moment,
            second_moment,
            step,
        } => {
            if first_moment.len() != grad.len() {
                return Err(Error::Config(
                    "optimizer_step: Adam moment length mismatch".into(),
                ));
            }
            *step += 1;
            let t = *step as i32;
            let c1 = 1.0 - ADAM_BETA1.powi(t);
            let c2 = 1.0 - ADAM_BETA2.powi(t);
            let lr = *learning_rate;
            for (((p, g), m), v) in out
                .as_mut_slice()
                .iter_mut()
                .zip(grad.iter())
                .zip(first_moment.iter_mut())
                .zip(second_moment.iter_mut())
            {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p += sign * lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
    Ok(out)
}
