use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for a list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Tensor], config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: params.iter().map(Tensor::zeros_like).collect(),
            v: params.iter().map(Tensor::zeros_like).collect(),
        }
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [Tensor],
    grads: &[Tensor],
) -> Result<(), NeuralError> {
    if params.len() != state.m.len() || grads.len() != params.len() {
        return Err(NeuralError::Shape(format!(
            "{} parameters, {} gradients, optimizer holds {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if !p.same_shape(g) || !p.same_shape(&state.m[i]) {
            return Err(NeuralError::Shape(format!(
                "parameter {i}: shape {:?} vs gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let it = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((p, &g), (m, v)) in it {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}
