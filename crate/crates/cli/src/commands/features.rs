use std::collections::BTreeMap;
use std::path::PathBuf;

use ablate_core::corpus::ClipRef;
use ablate_core::stats::TraitVector;
use ablate_core::trainkit::{ClipExamples, FeatureExtractor, FrameFeatures};
use rayon::prelude::*;

use crate::data::{index_frames, load_image, ImageKind, RunLayout};
use crate::error::{CliError, Result};

/// Feature vectors for every frame image of `clips` under one image kind.
/// Clips without images are left out. Targets default to 0.5 when `labels`
/// is `None` (prediction does not need them).
pub fn clip_examples(
    run: &RunLayout,
    kind: ImageKind,
    clips: &[ClipRef],
    labels: Option<&BTreeMap<String, TraitVector<f64>>>,
) -> Result<Vec<ClipExamples<f64>>> {
    let index = index_frames(&run.images_dir(kind))?;
    let extractor = FeatureExtractor::default();
    let mut out = Vec::new();
    let mut work: Vec<(usize, u32, &PathBuf)> = Vec::new();
    for clip in clips {
        let Some(frames) = index.get(&clip.clip_id) else {
            continue;
        };
        let target = match labels {
            Some(l) => *l.get(&clip.clip_id).ok_or_else(|| {
                CliError::Validation(format!("no ground truth for clip `{}`", clip.clip_id))
            })?,
            None => TraitVector::splat(0.5).expect("in range"),
        };
        work.extend(frames.iter().map(|(i, p)| (out.len(), *i, p)));
        out.push(ClipExamples {
            clip_id: clip.clip_id.clone(),
            uid: clip.uid.clone(),
            target,
            frames: Vec::new(),
        });
    }
    let features: Vec<(usize, FrameFeatures<f64>)> = work
        .par_iter()
        .map(|(slot, frame_index, path)| {
            let img = load_image(path)?;
            Ok((
                *slot,
                FrameFeatures {
                    frame_index: *frame_index,
                    features: extractor.extract(&img),
                },
            ))
        })
        .collect::<Result<_>>()?;
    for (slot, f) in features {
        out[slot].frames.push(f);
    }
    Ok(out)
}
