//! Core of a confound-free image ablation harness.
//!
//! * [`corpus`]: clip identities, grouped (leakage-free) splits and overlap statistics.
//! * [`imageops`]: landmark alignment and the face / background / entire-frame
//!   condition images, plus the mean-image spread statistic.
//! * [`stats`]: Pearson correlation, Fisher-z comparison of two correlations,
//!   Bonferroni significance, MAE and per-video aggregation.
//! * [`trainkit`]: a small linear regressor trained with SGD + momentum on an
//!   MAE loss, checkpoint selection and frozen-branch late fusion.
//!
//! Numeric code is generic over [`Scalar`] (`f32` / `f64`); the aliases below
//! pin the double-precision instantiations used by the command-line tool.

pub mod corpus;
pub mod imageops;
pub mod scalar;
pub mod stats;
pub mod trainkit;

pub use scalar::Scalar;

pub type LandmarkSetF64 = imageops::LandmarkSet<f64>;
pub type SimilarityTransformF64 = imageops::SimilarityTransform<f64>;
pub type SimilarityStatF64 = imageops::SimilarityStat<f64>;
pub type TraitVectorF64 = stats::TraitVector<f64>;
pub type PredictionTableF64 = stats::PredictionTable<f64>;
pub type CorrelationResultF64 = stats::CorrelationResult<f64>;
pub type ComparisonResultF64 = stats::ComparisonResult<f64>;
pub type RegressorF64 = trainkit::Regressor<f64>;
pub type FusionModelF64 = trainkit::FusionModel<f64>;
pub type CheckpointF64 = trainkit::Checkpoint<f64>;
pub type TrainConfigF64 = trainkit::TrainConfig<f64>;

pub type LandmarkSetF32 = imageops::LandmarkSet<f32>;
pub type TraitVectorF32 = stats::TraitVector<f32>;
pub type RegressorF32 = trainkit::Regressor<f32>;
