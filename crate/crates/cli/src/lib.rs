//! Configuration-driven experiment runner: condition-number sweeps,
//! seeded training trials, drop-tolerance ablations and gradient checks.
//!
//! Every command writes into one output directory: a config echo, a run
//! manifest, and CSV/JSON results whose layouts are listed in `SCHEMAS.md`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

pub use commands::{cmd_ablation, cmd_cond_sweep, cmd_gradcheck, cmd_train, Outcome};
pub use config::{parse_config, ExperimentConfig, ProblemSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Assembly(#[from] pcp::assembly::AssemblyError),
    #[error(transparent)]
    Neural(#[from] pcp::neural::NeuralError),
    #[error(transparent)]
    Train(#[from] pcp::training::TrainError),
    #[error(transparent)]
    Condition(#[from] pcp::conditioning::ConditionError),
    #[error(transparent)]
    Sparse(#[from] pcp::sparse::SparseError),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ALL_FAILED: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            _ => EXIT_ALL_FAILED,
        }
    }
}
