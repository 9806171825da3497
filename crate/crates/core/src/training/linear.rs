use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::loss::{
    compute_metrics, loss_gradient_wrt_outputs, preconditioned_loss, ErrorTarget, LossMode,
};
use super::record::{FactorStats, LogEntry, TrainRecord};
use super::TrainError;
use crate::assembly::BvpSystem;
use crate::neural::{
    adam_step, AdamConfig, AdamState, LossBuilder, MlpModel, NeuralError, Tape, Tensor, Var,
};
use crate::sparse::{ilu_factorize, norm2, IluFactors};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Optimizer steps `K`.
    pub iterations: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub drop_tol: f64,
    pub log_stride: usize,
    pub loss_mode: LossMode,
    pub error_target: ErrorTarget,
    /// Stop once `√loss / ‖P⁻¹b‖` falls below this.
    pub stop_rel_residual: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            iterations: 2000,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            seed: 0,
            drop_tol: 1e-4,
            log_stride: 100,
            loss_mode: LossMode::Preconditioned,
            error_target: ErrorTarget::Discrete,
            stop_rel_residual: None,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad(format!(
                "betas must lie in [0, 1), got ({}, {})",
                self.beta1, self.beta2
            ));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.drop_tol.is_finite() && self.drop_tol >= 0.0) {
            return bad(format!(
                "drop_tol must be non-negative, got {}",
                self.drop_tol
            ));
        }
        if self.log_stride == 0 {
            return bad("log_stride must be at least 1".into());
        }
        if let Some(t) = self.stop_rel_residual {
            if !(t > 0.0) {
                return bad(format!("stop_rel_residual must be positive, got {t}"));
            }
        }
        Ok(())
    }
}

/// Factors used by the loss: ILU of `A` in preconditioned mode, identity
/// factors in raw mode.
pub(crate) fn loss_factors(
    system: &BvpSystem,
    config: &TrainConfig,
) -> Result<(IluFactors, FactorStats), TrainError> {
    let start = Instant::now();
    let f = match config.loss_mode {
        LossMode::Preconditioned => ilu_factorize(system.matrix(), config.drop_tol)?,
        LossMode::RawDiscrete => IluFactors::identity(system.n()),
    };
    let stats = FactorStats {
        nnz_a: system.matrix().nnz(),
        nnz_factors: f.nnz(),
        factor_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((f, stats))
}

pub(crate) fn target_values(
    system: &BvpSystem,
    target: ErrorTarget,
) -> Result<Vec<f64>, TrainError> {
    Ok(match target {
        ErrorTarget::Discrete => system.discrete_solution()?,
        ErrorTarget::Reference => system.reference()?.to_vec(),
    })
}

pub(crate) fn coords_tensor(system: &BvpSystem) -> Result<Tensor, TrainError> {
    let dims = system.mesh().dims();
    Ok(Tensor::matrix(
        system.n(),
        dims,
        system.normalized_coords(),
    )?)
}

/// Trains `model` on one linear system (factorizing it first).
pub fn train_linear(
    system: &BvpSystem,
    model: &mut MlpModel,
    config: &TrainConfig,
) -> Result<TrainRecord, TrainError> {
    config.validate()?;
    let (f, stats) = loss_factors(system, config)?;
    let target = target_values(system, config.error_target)?;
    train_linear_with(system, model, config, &f, stats, &target)
}

/// Training loop with factors and metric target supplied by the caller.
///
/// Each iteration evaluates the network on the unknown nodes (coordinates
/// mapped to `[0, 1]`), computes the loss off-tape, chains its output
/// gradient into the tape and takes one Adam step.
pub fn train_linear_with(
    system: &BvpSystem,
    model: &mut MlpModel,
    config: &TrainConfig,
    factors: &IluFactors,
    stats: FactorStats,
    target: &[f64],
) -> Result<TrainRecord, TrainError> {
    config.validate()?;
    let features = model.features(&coords_tensor(system)?)?;
    let mut adam = AdamState::new(model.params(), config.adam());
    let pb_norm = {
        let mut pb = system.bias().to_vec();
        factors.precondition_in_place(&mut pb)?;
        norm2(&pb)
    };
    let start = Instant::now();
    let mut history = Vec::new();
    let mut iteration = 0;
    loop {
        let mut tape = Tape::new();
        let params = model.register(&mut tape);
        let input = tape.constant(features.clone());
        let out = model.forward_tape(&mut tape, &params, input)?;
        let u = tape.value(out).data().to_vec();
        let (loss, r) = preconditioned_loss(&u, system, factors)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFinite { iteration, loss });
        }
        let stop = iteration == config.iterations
            || config
                .stop_rel_residual
                .is_some_and(|tol| loss.sqrt() < tol * pb_norm);
        if stop || iteration % config.log_stride == 0 {
            let l2re = compute_metrics(&u, target)?.l2re;
            history.push(LogEntry {
                iteration,
                loss,
                l2re,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        if stop {
            return Ok(TrainRecord {
                history,
                final_metrics: compute_metrics(&u, target)?,
                final_loss: loss,
                iterations: iteration,
                factor: stats,
                predictions: u,
            });
        }
        let g = loss_gradient_wrt_outputs(&r, system, factors)?;
        let root = tape.external(out, loss, g)?;
        let mut grads = tape.backward(root)?;
        let grads: Vec<Tensor> = params
            .iter()
            .zip(model.params())
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros_like(p)))
            .collect();
        adam_step(&mut adam, model.params_mut(), &grads)?;
        iteration += 1;
    }
}

/// The training loss as a [`LossBuilder`], for gradient checks.
pub struct DiscreteLoss<'a> {
    system: &'a BvpSystem,
    factors: &'a IluFactors,
    features: Tensor,
}

impl<'a> DiscreteLoss<'a> {
    pub fn new(
        system: &'a BvpSystem,
        factors: &'a IluFactors,
        model: &MlpModel,
    ) -> Result<Self, TrainError> {
        let features = model.features(&coords_tensor(system)?)?;
        Ok(Self {
            system,
            factors,
            features,
        })
    }
}

impl LossBuilder for DiscreteLoss<'_> {
    fn build(
        &self,
        model: &MlpModel,
        tape: &mut Tape,
        params: &[Var],
    ) -> Result<(Var, f64), NeuralError> {
        let input = tape.constant(self.features.clone());
        let out = model.forward_tape(tape, params, input)?;
        let u = tape.value(out).data().to_vec();
        let wrap = |e: TrainError| NeuralError::Loss(e.to_string());
        let (loss, r) = preconditioned_loss(&u, self.system, self.factors).map_err(wrap)?;
        let g = loss_gradient_wrt_outputs(&r, self.system, self.factors).map_err(wrap)?;
        Ok((tape.external(out, loss, g)?, loss))
    }
}
