use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        for (field, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(TrainError::Config {
                    field,
                    reason: format!("must lie in (0, 1), got {v}"),
                });
            }
        }
        if !(self.eps > 0.0) {
            return Err(TrainError::Config {
                field: "adam_eps",
                reason: format!("must be positive, got {}", self.eps),
            });
        }
        Ok(())
    }
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place. A non-finite
/// gradient entry leaves everything untouched and returns an error.
pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<(), TrainError> {
    if params.len() != grad.len() || state.m.len() != grad.len() {
        return Err(TrainError::Config {
            field: "gradient",
            reason: format!(
                "length {} does not match {} parameters",
                grad.len(),
                params.len()
            ),
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(TrainError::NonFinite {
            what: if grad[i].is_nan() {
                "gradient (NaN)"
            } else {
                "gradient (infinite)"
            },
            step: state.step as usize,
            checkpoint: None,
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grad)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
    }
    Ok(())
}
