use serde::{Deserialize, Serialize};

use super::linear::{loss_factors, target_values, train_linear_with, TrainConfig};
use super::loss::{compute_metrics, Metrics};
use super::record::TrainRecord;
use super::TrainError;
use crate::assembly::NonlinearSystem;
use crate::neural::MlpModel;
use crate::sparse::DenseLu;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    /// Outer steps `T`.
    pub steps: usize,
    pub inner_iterations: usize,
    /// Iterations for the first outer step; the network starts untrained.
    pub cold_iterations: usize,
    pub damping: f64,
    /// Stop once `‖F(u)‖∞` falls below this.
    pub tol: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            inner_iterations: 2000,
            cold_iterations: 2000,
            damping: 1.0,
            tol: 1e-8,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.steps == 0 {
            return Err(TrainError::Config("Newton needs at least one step".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(TrainError::Config(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonRecord {
    pub steps: Vec<TrainRecord>,
    /// `‖F(u)‖∞` at the initial guess and after every outer step.
    pub residual_history: Vec<f64>,
    /// Against the system's reference, when it has one.
    pub final_metrics: Option<Metrics>,
    #[serde(skip)]
    pub predictions: Vec<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Aborts when the residual exceeds ten times its initial value for three
/// consecutive steps.
fn diverging(history: &[f64]) -> bool {
    let limit = 10.0 * history[0];
    history.len() > 3 && history[history.len() - 3..].iter().all(|&r| !(r <= limit))
}

/// Newton's method with dense LU solves of every tangent system.
///
/// Returns the solution and the residual history; errors if `tol` is not
/// reached in `steps` iterations.
pub fn newton_oracle(
    system: &NonlinearSystem,
    config: &NewtonConfig,
) -> Result<(Vec<f64>, Vec<f64>), TrainError> {
    config.validate()?;
    let mut u = system.initial_guess();
    let mut f = system.residual(&u)?;
    let mut history = vec![inf_norm(&f)];
    for _ in 0..config.steps {
        if history.last().is_some_and(|&r| r < config.tol) {
            return Ok((u, history));
        }
        let jac = system.jacobian(&u)?.to_dense();
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = DenseLu::factor(&jac)?.solve(&neg)?;
        u.iter_mut()
            .zip(&delta)
            .for_each(|(u, d)| *u += config.damping * d);
        f = system.residual(&u)?;
        history.push(inf_norm(&f));
        if diverging(&history) {
            return Err(TrainError::Diverged { history });
        }
    }
    if history.last().is_some_and(|&r| r < config.tol) {
        Ok((u, history))
    } else {
        Err(TrainError::NewtonNoConvergence {
            steps: config.steps,
            history,
        })
    }
}

/// Newton's method with the network solving each tangent system
/// `J(u_prev)·u = J(u_prev)·u_prev − F(u_prev)`, re-factorizing `J` every
/// step and carrying parameters across steps.
pub fn train_newton(
    system: &NonlinearSystem,
    model: &mut MlpModel,
    newton: &NewtonConfig,
    train: &TrainConfig,
) -> Result<NewtonRecord, TrainError> {
    newton.validate()?;
    train.validate()?;
    let mut u_prev = system.initial_guess();
    let mut history = vec![inf_norm(&system.residual(&u_prev)?)];
    let mut steps = Vec::with_capacity(newton.steps);
    for i in 0..newton.steps {
        let tangent = system.tangent_system(&u_prev)?;
        let (factors, stats) = loss_factors(&tangent, train)?;
        let target = if tangent.has_reference() {
            target_values(&tangent, train.error_target)?
        } else {
            target_values(&tangent, super::ErrorTarget::Discrete)?
        };
        let iterations = if i == 0 {
            newton.cold_iterations
        } else {
            newton.inner_iterations
        };
        let config = TrainConfig {
            iterations,
            ..*train
        };
        let record = train_linear_with(&tangent, model, &config, &factors, stats, &target)?;
        for (u, v) in u_prev.iter_mut().zip(&record.predictions) {
            *u += newton.damping * (v - *u);
        }
        steps.push(record);
        history.push(inf_norm(&system.residual(&u_prev)?));
        if diverging(&history) {
            return Err(TrainError::Diverged { history });
        }
        if history.last().is_some_and(|&r| r < newton.tol) {
            break;
        }
    }
    let final_metrics = match system.reference() {
        Ok(r) => Some(compute_metrics(&u_prev, r)?),
        Err(_) => None,
    };
    Ok(NewtonRecord {
        steps,
        residual_history: history,
        final_metrics,
        predictions: u_prev,
    })
}
