use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{sgd_step, FusionModel, Predictor, Regressor, Sample, Velocity};
use super::{Result, TrainError};
use crate::stats::{self, TraitVector};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub lr: T,
    pub momentum: T,
    pub validate_every: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: T::lit(0.001),
            momentum: T::lit(0.9),
            validate_every: 10,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.validate_every == 0 || !self.epochs.is_multiple_of(self.validate_every) {
            return bad("validate_every must divide epochs");
        }
        if self.lr <= T::zero() || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        if !(self.momentum >= T::zero() && self.momentum < T::one()) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures<T> {
    pub frame_index: u32,
    pub features: Vec<T>,
}

/// All frames of one clip, already turned into feature vectors, plus the
/// clip's labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipExamples<T> {
    pub clip_id: String,
    pub uid: String,
    pub target: TraitVector<T>,
    pub frames: Vec<FrameFeatures<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedFrame<T> {
    pub frame_index: u32,
    pub face: Vec<T>,
    pub bg: Vec<T>,
}

/// Face and background features of the same frames of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedClip<T> {
    pub clip_id: String,
    pub uid: String,
    pub target: TraitVector<T>,
    pub frames: Vec<PairedFrame<T>>,
}

/// Matches the face and background datasets frame by frame.
pub fn pair_datasets<T: Scalar>(face: &[ClipExamples<T>], bg: &[ClipExamples<T>]) -> Result<Vec<PairedClip<T>>> {
    let bg_by_id: BTreeMap<&str, &ClipExamples<T>> = bg.iter().map(|c| (c.clip_id.as_str(), c)).collect();
    let face_ids: BTreeSet<&str> = face.iter().map(|c| c.clip_id.as_str()).collect();
    if let Some(orphan) = bg.iter().find(|c| !face_ids.contains(c.clip_id.as_str())) {
        return Err(TrainError::MissingPairedCondition {
            clip_id: orphan.clip_id.clone(),
            frame_index: orphan.frames.first().map_or(0, |f| f.frame_index),
            missing: "face",
        });
    }
    face.iter()
        .map(|fc| {
            let missing = |frame_index, missing| TrainError::MissingPairedCondition {
                clip_id: fc.clip_id.clone(),
                frame_index,
                missing,
            };
            let bc = bg_by_id
                .get(fc.clip_id.as_str())
                .ok_or_else(|| missing(fc.frames.first().map_or(0, |f| f.frame_index), "background"))?;
            let bg_frames: BTreeMap<u32, &Vec<T>> =
                bc.frames.iter().map(|f| (f.frame_index, &f.features)).collect();
            let face_frames: BTreeSet<u32> = fc.frames.iter().map(|f| f.frame_index).collect();
            if let Some(f) = bc.frames.iter().find(|f| !face_frames.contains(&f.frame_index)) {
                return Err(missing(f.frame_index, "face"));
            }
            let frames = fc
                .frames
                .iter()
                .map(|f| {
                    let bgf = bg_frames
                        .get(&f.frame_index)
                        .ok_or_else(|| missing(f.frame_index, "background"))?;
                    Ok(PairedFrame {
                        frame_index: f.frame_index,
                        face: f.features.clone(),
                        bg: (*bgf).clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PairedClip {
                clip_id: fc.clip_id.clone(),
                uid: fc.uid.clone(),
                target: fc.target,
                frames,
            })
        })
        .collect()
}

/// The frames available for one clip.
#[derive(Debug, Clone, Copy)]
pub struct ClipFrames<'a> {
    pub clip_id: &'a str,
    pub frame_indices: &'a [u32],
}

fn sample_positions<R: Rng>(frame_counts: impl Iterator<Item = (usize, String)>, rng: &mut R) -> Result<Vec<usize>> {
    frame_counts
        .map(|(n, id)| {
            if n == 0 {
                Err(TrainError::EmptyClip(id))
            } else {
                Ok(rng.random_range(0..n))
            }
        })
        .collect()
}

/// Draws one frame per clip, uniformly over that clip's frames.
pub fn sample_epoch_frames<R: Rng>(clips: &[ClipFrames<'_>], rng: &mut R) -> Result<Vec<(String, u32)>> {
    let pos = sample_positions(
        clips.iter().map(|c| (c.frame_indices.len(), c.clip_id.to_string())),
        rng,
    )?;
    Ok(clips
        .iter()
        .zip(pos)
        .map(|(c, p)| (c.clip_id.to_string(), c.frame_indices[p]))
        .collect())
}

/// A parameter snapshot taken at a validation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T, M = Regressor<T>> {
    pub epoch: usize,
    pub val_loss: T,
    pub config: TrainConfig<T>,
    pub params: M,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry<T> {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub train_loss: T,
    /// MAE of clamped predictions on the first frame of every validation clip.
    pub val_loss: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T, M = Regressor<T>> {
    pub best: Checkpoint<T, M>,
    pub history: Vec<HistoryEntry<T>>,
    pub last: M,
}

/// Internal view of a dataset for the shared training loop: per clip, the
/// clip's UID, target and one feature vector per frame.
struct LoopClip<'a, T> {
    id: &'a str,
    uid: &'a str,
    target: TraitVector<T>,
    frames: Vec<Vec<T>>,
}

fn check_partition<T>(train: &[LoopClip<'_, T>], val: &[LoopClip<'_, T>]) -> Result<()> {
    if train.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let tu: BTreeSet<&str> = train.iter().map(|c| c.uid).collect();
    let shared: Vec<String> = val
        .iter()
        .map(|c| c.uid)
        .collect::<BTreeSet<_>>()
        .intersection(&tu)
        .map(|s| s.to_string())
        .collect();
    if !shared.is_empty() {
        return Err(TrainError::LeakyPartition(shared));
    }
    if let Some(c) = train.iter().chain(val).find(|c| c.frames.is_empty()) {
        return Err(TrainError::EmptyClip(c.id.to_string()));
    }
    Ok(())
}

fn validation_loss<T: Scalar>(model: &Regressor<T>, val: &[LoopClip<'_, T>]) -> Result<T> {
    let (pred, truth): (Vec<_>, Vec<_>) = val.iter().map(|c| (model.predict(&c.frames[0]), c.target)).unzip();
    Ok(stats::mae(&pred, &truth)?)
}

fn run_loop<T: Scalar>(
    mut model: Regressor<T>,
    train: &[LoopClip<'_, T>],
    val: &[LoopClip<'_, T>],
    config: &TrainConfig<T>,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    check_partition(train, val)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity = Velocity::zeros_like(&model);
    let mut history = Vec::with_capacity(config.epochs / config.validate_every);
    let mut best: Option<Checkpoint<T>> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        let picks = sample_positions(train.iter().map(|c| (c.frames.len(), c.id.to_string())), &mut rng)?;
        order.shuffle(&mut rng);
        let mut loss_sum = T::zero();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Sample<T>> = chunk
                .iter()
                .map(|&i| Sample {
                    features: train[i].frames[picks[i]].clone(),
                    target: train[i].target,
                })
                .collect();
            let loss = sgd_step(&mut model, &batch, config.lr, config.momentum, &mut velocity)?;
            loss_sum = loss_sum + loss * T::count(batch.len());
        }
        if epoch % config.validate_every == 0 {
            let val_loss = validation_loss(&model, val)?;
            history.push(HistoryEntry {
                epoch,
                train_loss: loss_sum / T::count(train.len()),
                val_loss,
            });
            // Strict comparison keeps the earliest epoch on ties.
            if best.as_ref().is_none_or(|b| val_loss < b.val_loss) {
                best = Some(Checkpoint {
                    epoch,
                    val_loss,
                    config: *config,
                    params: model.clone(),
                });
            }
        }
    }
    Ok(TrainOutcome {
        best: best.expect("at least one validation point"),
        history,
        last: model,
    })
}

fn loop_view<T: Scalar>(clips: &[ClipExamples<T>]) -> Vec<LoopClip<'_, T>> {
    clips
        .iter()
        .map(|c| {
            let mut frames: Vec<&FrameFeatures<T>> = c.frames.iter().collect();
            frames.sort_by_key(|f| f.frame_index);
            LoopClip {
                id: &c.clip_id,
                uid: &c.uid,
                target: c.target,
                frames: frames.into_iter().map(|f| f.features.clone()).collect(),
            }
        })
        .collect()
}

/// Trains a regressor for `config.epochs` epochs, one randomly sampled frame
/// per training clip per epoch, validating every `config.validate_every`
/// epochs. The best checkpoint has the lowest validation loss, earliest epoch
/// on ties.
pub fn train<T: Scalar>(
    model: Regressor<T>,
    train: &[ClipExamples<T>],
    val: &[ClipExamples<T>],
    config: &TrainConfig<T>,
) -> Result<TrainOutcome<T>> {
    run_loop(model, &loop_view(train), &loop_view(val), config)
}

fn paired_view<'a, T: Scalar>(model: &FusionModel<T>, clips: &'a [PairedClip<T>]) -> Vec<LoopClip<'a, T>> {
    clips
        .iter()
        .map(|c| {
            let mut frames: Vec<&PairedFrame<T>> = c.frames.iter().collect();
            frames.sort_by_key(|f| f.frame_index);
            LoopClip {
                id: &c.clip_id,
                uid: &c.uid,
                target: c.target,
                frames: frames.into_iter().map(|f| model.branch_outputs(&f.face, &f.bg)).collect(),
            }
        })
        .collect()
}

/// Trains only the fusion layer on top of two frozen branches taken from the
/// given checkpoints. Branch outputs are computed once up front; the branches
/// are never handed to the optimiser.
pub fn train_fusion<T: Scalar>(
    face: &Checkpoint<T>,
    bg: &Checkpoint<T>,
    train: &[PairedClip<T>],
    val: &[PairedClip<T>],
    config: &TrainConfig<T>,
) -> Result<TrainOutcome<T, FusionModel<T>>> {
    let model = FusionModel::new(face.params.clone(), bg.params.clone());
    let outcome = run_loop(
        model.fusion.clone(),
        &paired_view(&model, train),
        &paired_view(&model, val),
        config,
    )?;
    let wrap = |fusion: Regressor<T>| FusionModel {
        face_branch: model.face_branch.clone(),
        bg_branch: model.bg_branch.clone(),
        fusion,
    };
    Ok(TrainOutcome {
        best: Checkpoint {
            epoch: outcome.best.epoch,
            val_loss: outcome.best.val_loss,
            config: outcome.best.config,
            params: wrap(outcome.best.params),
        },
        history: outcome.history,
        last: wrap(outcome.last),
    })
}

/// Runs the model on every frame of one video and averages the clamped
/// per-frame predictions trait by trait.
pub fn predict<T: Scalar, P: Predictor<T>>(model: &P, video_id: &str, frames: &[P::Input]) -> Result<TraitVector<T>> {
    let preds: Vec<TraitVector<T>> = frames.iter().map(|f| model.predict_frame(f)).collect();
    Ok(stats::mean_prediction(video_id, &preds)?)
}
