//! Finite-difference assembly of the model problems on uniform meshes.
//!
//! Dirichlet and initial data are eliminated by substitution: known nodal
//! values are moved into the bias, so the assembled matrix acts on the
//! unknown nodes only.

mod burgers;
mod heat;
mod helmholtz;
mod mesh;
mod poisson;
mod system;
mod wave;

pub use burgers::{assemble_burgers_1d, burgers_initial};
pub use heat::{assemble_heat_step, heat_exact};
pub use helmholtz::{assemble_helmholtz_2d, helmholtz_reference};
pub use mesh::{Axis, UniformMesh};
pub use poisson::{assemble_poisson_1d, PoissonForcing};
pub use system::{BvpSystem, NodeRole, NonlinearKind, NonlinearSystem, Problem};
pub use wave::{assemble_wave_1d, wave_forcing, wave_reference, WAVE_DOMAIN, WAVE_TIME_WEIGHT};

use thiserror::Error;

use crate::sparse::SparseError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no reference solution is defined for this system")]
    NoReference,
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("i/o error: {0}")]
    Io(String),
}
