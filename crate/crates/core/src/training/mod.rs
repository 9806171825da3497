//! Training loops for the preconditioned discrete loss
//! `‖Û⁻¹L̂⁻¹(A·u_θ − b)‖²`: a single linear system, implicit time stepping
//! with parameter transfer, and Newton linearization of nonlinear systems.

mod linear;
mod loss;
mod newton;
mod record;
mod stepping;

pub use linear::{train_linear, train_linear_with, DiscreteLoss, TrainConfig};
pub use loss::{
    compute_metrics, loss_gradient_wrt_outputs, preconditioned_loss, ErrorTarget, LossMode, Metrics,
};
pub use newton::{newton_oracle, train_newton, NewtonConfig, NewtonRecord};
pub use record::{FactorStats, LogEntry, TrainRecord};
pub use stepping::{heat_step_builder, train_time_stepping, SteppingRecord, TimeSteppingConfig};

use thiserror::Error;

use crate::assembly::AssemblyError;
use crate::neural::NeuralError;
use crate::sparse::SparseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at iteration {iteration}")]
    NonFinite { iteration: usize, loss: f64 },
    #[error("reference has zero norm; relative metrics undefined (mse = {mse})")]
    ZeroReference { mse: f64 },
    #[error("Newton residual diverged; history {history:?}")]
    Diverged { history: Vec<f64> },
    #[error("Newton did not reach tolerance in {steps} steps; history {history:?}")]
    NewtonNoConvergence { steps: usize, history: Vec<f64> },
    #[error("non-finite input values")]
    NonFiniteInput,
}
