//! Super-resolution refiner, optimizer and the two-arm experiment harness.

mod adam;
mod network;
mod train;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON as ADAM_EPSILON};
pub use network::{
    backward, forward, he_uniform_bound, init_network, ConvLayer, ConvNetParams, ForwardCache, Gradients,
    HIDDEN_CHANNELS, KERNEL,
};
pub use train::{
    compare_arms, epoch_order, evaluate, lr_at, train, train_from, ArmResult, ComparisonReport, Evaluation,
    LogRecord, RunSummary, SeedComparison, TrainConfig, TrainingLog, CONVERGED_WINDOW,
};

use thiserror::Error;

use crate::losses::LossError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("forward cache does not match the current parameters")]
    StaleCache,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{0} set is empty")]
    EmptyDataset(&'static str),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("parameters became non-finite")]
    Diverged,
    #[error(transparent)]
    Loss(#[from] LossError),
}
