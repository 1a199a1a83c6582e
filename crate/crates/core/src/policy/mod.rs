//! Toy dual-expert flow-matching policy with its training loop and
//! numerical verification hooks.

pub mod autograd;
mod config;
mod flow;
mod gradcheck;
mod model;
mod optim;
mod params;
mod regularize;
mod train;

use thiserror::Error;

pub use config::{DataConfig, ModelConfig, RunConfig, TrainConfig};
pub use flow::{euler_sample, fm_loss, sample_noise, FlowSample, VelocityField};
pub use gradcheck::{grad_check, sample_indices, FlowObjective, Objective};
pub use model::{
    fnv1a, shared_attention, shared_attention_block, tau_embedding, tokenize, view_features,
    LayerVars, LayerWeights, MotPolicy, PolicyInput, ViewTokens,
};
pub use optim::{AdamW, LrSchedule};
pub use params::{Expert, ParamId, ParamSpec, ParamStore};
pub use regularize::{drop_views, mask_state};
pub use train::{
    make_flow_batch, source_from_config, train, ExampleSource, MetricRecord, MixtureSource,
    Schedule, Stage, SyntheticReach, TrainOptions, TrainOutcome,
};

use crate::action_space::ActionSpaceError;
use crate::mixture::MixtureError;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("loss diverged at step {step}: {loss}")]
    DivergedLoss { step: usize, loss: f64 },
    #[error("no views to drop from")]
    NoViews,
    #[error(transparent)]
    ActionSpace(#[from] ActionSpaceError),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
