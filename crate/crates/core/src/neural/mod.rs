//! Multilayer perceptrons with hand-derived gradients, a diagonal Gaussian
//! policy, Adam, conjugate gradient and parameter checkpoints.

mod adam;
mod cg;
pub mod checkpoint;
mod mlp;
mod policy;
mod value;

pub use adam::{Adam, AdamConfig};
pub use cg::{conjugate_gradient, CgSolution};
pub use checkpoint::{CheckpointKind, CheckpointMeta};
pub use mlp::{InitConfig, Mlp, Workspace};
pub use policy::{DiagGaussianPolicy, ScoreBatch, INIT_LOGSTD};
pub use value::{mse, mse_grad, value_fit, ValueFitReport, ValueTrainerConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NeuralError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
