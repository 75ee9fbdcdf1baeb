//! Desk-scale training protocol: a linear trait regressor over downsampled
//! grayscale features, SGD with classical momentum on an MAE loss, periodic
//! validation with best-checkpoint selection, and late fusion of two frozen
//! branches through a trainable linear layer.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{CheckpointFile, FORMAT_VERSION};
pub use model::{
    batch_loss, gradient, sgd_step, FeatureExtractor, FusionModel, Predictor, Regressor, Sample,
    Velocity, NUM_TRAITS,
};
pub use train::{
    pair_datasets, predict, sample_epoch_frames, train, train_fusion, Checkpoint, ClipExamples,
    ClipFrames, FrameFeatures, HistoryEntry, PairedClip, PairedFrame, TrainConfig, TrainOutcome,
};

use thiserror::Error;

use crate::stats::StatsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("clip `{0}` has no frames")]
    EmptyClip(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("gradient is not finite")]
    NonFiniteGradient,
    #[error("feature vector has length {got}, model expects {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("train and validation splits share source videos: {0:?}")]
    LeakyPartition(Vec<String>),
    #[error("clip `{clip_id}` frame {frame_index} has no paired {missing} condition")]
    MissingPairedCondition {
        clip_id: String,
        frame_index: u32,
        missing: &'static str,
    },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Result<T> = std::result::Result<T, TrainError>;
