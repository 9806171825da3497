use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::assembly::BvpSystem;
use crate::sparse::{check_len, IluFactors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `‖P⁻¹(A·u − b)‖²`.
    #[default]
    Preconditioned,
    /// `‖A·u − b‖²`.
    RawDiscrete,
}

/// What the logged error metrics compare against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorTarget {
    /// The exact solution of the discrete system.
    #[default]
    Discrete,
    /// The system's reference solution (closed form or oracle).
    Reference,
}

/// `(‖Û⁻¹L̂⁻¹(A·u − b)‖², Û⁻¹L̂⁻¹(A·u − b))`.
pub fn preconditioned_loss(
    u: &[f64],
    system: &BvpSystem,
    f: &IluFactors,
) -> Result<(f64, Vec<f64>), TrainError> {
    check_len(system.n(), u.len())?;
    let mut r = system.matrix().spmv(u)?;
    r.iter_mut().zip(system.bias()).for_each(|(r, b)| *r -= b);
    f.precondition_in_place(&mut r)?;
    let loss = r.iter().map(|v| v * v).sum();
    Ok((loss, r))
}

/// `2·Aᵀ·L̂⁻ᵀ·Û⁻ᵀ·r`, the gradient of [`preconditioned_loss`] with respect
/// to `u`, given the `r` it returned.
pub fn loss_gradient_wrt_outputs(
    r: &[f64],
    system: &BvpSystem,
    f: &IluFactors,
) -> Result<Vec<f64>, TrainError> {
    check_len(system.n(), r.len())?;
    let mut w = r.to_vec();
    f.precondition_transpose_in_place(&mut w)?;
    let mut g = system.matrix().spmv_transpose(&w)?;
    g.iter_mut().for_each(|v| *v *= 2.0);
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub l2re: f64,
    pub l1re: f64,
    pub mse: f64,
}

pub fn compute_metrics(pred: &[f64], reference: &[f64]) -> Result<Metrics, TrainError> {
    check_len(reference.len(), pred.len())?;
    if pred.iter().chain(reference).any(|v| !v.is_finite()) {
        return Err(TrainError::NonFiniteInput);
    }
    let (mut d2, mut r2, mut d1, mut r1) = (0.0, 0.0, 0.0, 0.0);
    for (p, r) in pred.iter().zip(reference) {
        let d = p - r;
        d2 += d * d;
        r2 += r * r;
        d1 += d.abs();
        r1 += r.abs();
    }
    let mse = if pred.is_empty() {
        0.0
    } else {
        d2 / pred.len() as f64
    };
    if r2 == 0.0 {
        return Err(TrainError::ZeroReference { mse });
    }
    Ok(Metrics {
        l2re: (d2 / r2).sqrt(),
        l1re: d1 / r1,
        mse,
    })
}
