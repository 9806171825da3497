use serde::{Deserialize, Serialize};

use super::linear::{loss_factors, target_values, train_linear_with, TrainConfig};
use super::loss::Metrics;
use super::record::{FactorStats, TrainRecord};
use super::TrainError;
use crate::assembly::{assemble_heat_step, heat_exact, BvpSystem};
use crate::neural::MlpModel;
use crate::sparse::{CsrMatrix, IluFactors};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSteppingConfig {
    pub steps: usize,
    pub dt: f64,
    /// Iterations for warm-started steps.
    pub inner_iterations: usize,
    /// Iterations for the first step, and for every step without transfer.
    pub cold_iterations: usize,
    /// Start each step from the previous step's parameters.
    pub transfer: bool,
}

impl Default for TimeSteppingConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            dt: 0.005,
            inner_iterations: 500,
            cold_iterations: 3000,
            transfer: true,
        }
    }
}

impl TimeSteppingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.steps == 0 {
            return Err(TrainError::Config(
                "time stepping needs at least one step".into(),
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(TrainError::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteppingRecord {
    pub steps: Vec<TrainRecord>,
    /// Optimizer steps summed over all time steps.
    pub total_iterations: usize,
    /// Number of ILU factorizations performed.
    pub factorizations: usize,
    pub final_metrics: Metrics,
    #[serde(skip)]
    pub final_predictions: Vec<f64>,
}

/// Builder for backward-Euler heat steps: step `i` gets bias `u_{i−1}`
/// and reference `sin(πx)·exp(−κπ²·i·dt)`. Also returns `u₀ = sin(πx)`.
#[allow(clippy::type_complexity)]
pub fn heat_step_builder(
    kappa: f64,
    nx: usize,
    dt: f64,
) -> Result<
    (
        impl Fn(usize, &[f64]) -> Result<BvpSystem, TrainError>,
        Vec<f64>,
    ),
    TrainError,
> {
    let base = assemble_heat_step(kappa, nx, dt)?;
    let xs: Vec<f64> = base.unknown_coords();
    let initial = xs.iter().map(|&x| heat_exact(kappa, x, 0.0)).collect();
    let build = move |i: usize, prev: &[f64]| -> Result<BvpSystem, TrainError> {
        let t = i as f64 * dt;
        let reference = xs.iter().map(|&x| heat_exact(kappa, x, t)).collect();
        Ok(base.with_bias(prev.to_vec())?.with_reference(reference)?)
    };
    Ok((build, initial))
}

/// Sequential implicit time stepping.
///
/// `builder(i, u_prev)` returns the system of step `i` (1-based) given the
/// previous state, which is the network's evaluation after step `i − 1`
/// (`initial` for the first step). The ILU factors are reused while the
/// matrix stays the same.
pub fn train_time_stepping<B>(
    builder: B,
    initial: &[f64],
    model: &mut MlpModel,
    ts: &TimeSteppingConfig,
    train: &TrainConfig,
) -> Result<SteppingRecord, TrainError>
where
    B: Fn(usize, &[f64]) -> Result<BvpSystem, TrainError>,
{
    train.validate()?;
    ts.validate()?;
    let fresh = model.clone();
    let mut prev = initial.to_vec();
    let mut cached: Option<(CsrMatrix, IluFactors, FactorStats)> = None;
    let mut factorizations = 0;
    let mut records = Vec::with_capacity(ts.steps);
    for i in 1..=ts.steps {
        let system = builder(i, &prev)?;
        if cached.as_ref().is_none_or(|(a, _, _)| a != system.matrix()) {
            let (f, stats) = loss_factors(&system, train)?;
            factorizations += 1;
            cached = Some((system.matrix().clone(), f, stats));
        }
        let (_, factors, stats) = cached.as_ref().expect("factors cached above");
        let cold = i == 1 || !ts.transfer;
        if !ts.transfer && i > 1 {
            model.load_params(&fresh)?;
        }
        let config = TrainConfig {
            iterations: if cold {
                ts.cold_iterations
            } else {
                ts.inner_iterations
            },
            ..*train
        };
        let target = target_values(&system, train.error_target)?;
        let record = train_linear_with(&system, model, &config, factors, *stats, &target)?;
        prev.clone_from(&record.predictions);
        records.push(record);
    }
    let last = records.last().expect("at least one step");
    Ok(SteppingRecord {
        total_iterations: records.iter().map(|r| r.iterations).sum(),
        factorizations,
        final_metrics: last.final_metrics,
        final_predictions: last.predictions.clone(),
        steps: records,
    })
}
