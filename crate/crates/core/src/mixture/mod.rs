//! Dataset registry, effective-frame accounting, trajectory ingestion and
//! balanced sampling.

mod registry;
mod report;
mod sampler;
mod trajectory;

use thiserror::Error;

pub use registry::{effective_count, Category, DatasetEntry, MixtureConfig, MixtureTag};
pub use report::{format_millions, mixture_report, CategoryRow, EntryRow, MixtureReport};
pub use sampler::{
    balanced_iterator, BalancedIterator, Draw, ExampleMixture, LoadedDataset,
    WeightedDatasetSampler,
};
pub use trajectory::{build_example, stride_sample, Example, Frame, Trajectory, Window};

use crate::action_space::ActionSpaceError;

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("mixture has no dataset with a positive effective count")]
    EmptyMixture,
    #[error("registry: {0}")]
    Config(String),
    #[error("trajectory: {0}")]
    Trajectory(String),
    #[error(transparent)]
    ActionSpace(#[from] ActionSpaceError),
}

/// The checked-in registry of the balanced pre-training corpus.
pub const PRETRAINING_REGISTRY: &str = include_str!("../../data/pretraining_mix.toml");
