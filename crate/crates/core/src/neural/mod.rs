//! Parameter-space reverse-mode autodiff, a Fourier-feature MLP and Adam.

mod adam;
mod checkpoint;
mod gradcheck;
mod kernel;
mod mlp;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{
    gradcheck, loss_gradient, GradcheckReport, LossBuilder, FD_STEP, SMALL_GRADIENT,
};
pub use mlp::{
    init_mlp, mlp_forward_batch, Activation, BatchOutput, EmbeddingSpec, FourierEmbedding,
    FrequencyInit, MlpModel, PREDICT_BLOCK,
};
pub use tape::{exp_fast, sigmoid, Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("backward needs a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Loss(String),
}
