use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use ablate_core::corpus::Split;
use ablate_core::imageops::{
    compute_template, make_background_condition, make_entire_frame_condition, make_face_condition, FillSource,
    FrameImage, LandmarkSet, CONDITION_SIZE, ENTIRE_FRAME_HEIGHT, ENTIRE_FRAME_WIDTH,
};
use rayon::prelude::*;

use crate::args::PreprocessArgs;
use crate::config::ConfigFile;
use crate::data::{index_frames, load_image, read_landmarks, save_image, write_text, ImageKind, LandmarkRecord, RunLayout};
use crate::error::{CliError, Result};

/// Fraction of the face canvas left free on each side of the template.
pub const TEMPLATE_MARGIN: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
enum Status {
    Written(&'static str),
    Exists,
    Skipped(String),
}

impl Status {
    fn usable(&self) -> bool {
        !matches!(self, Status::Skipped(_))
    }
}

struct Job<'a> {
    clip: &'a str,
    frame_index: u32,
    path: &'a PathBuf,
    record: Option<&'a LandmarkRecord>,
}

pub fn run(args: &PreprocessArgs, cfg: &ConfigFile, out: &mut String) -> Result<()> {
    let frames_dir = cfg.path(args.frames.clone(), "frames")?;
    let landmarks_path = cfg.path(args.landmarks.clone(), "landmarks")?;
    let run = RunLayout::new(cfg.path(args.out.clone(), "out")?);
    let condition = cfg.pick(args.condition, "condition")?;
    let kinds: Vec<ImageKind> = match condition {
        Some(c) => c.image_kinds().to_vec(),
        None => vec![ImageKind::Face, ImageKind::Background, ImageKind::EntireFrame],
    };

    let splits = run.load_splits()?;
    let landmarks = read_landmarks(&landmarks_path)?;
    let frames = index_frames(&frames_dir)?;

    let template = if kinds.contains(&ImageKind::Face) {
        let train: BTreeSet<&str> = splits.clips(Split::Training).iter().map(|c| c.clip_id.as_str()).collect();
        let sets: Vec<LandmarkSet<f64>> = landmarks
            .iter()
            .filter(|((clip, _), _)| train.contains(clip.as_str()))
            .filter_map(|(_, r)| r.as_ref().map(|(_, lm)| lm.clone()))
            .collect();
        if sets.is_empty() {
            return Err(CliError::Validation("no landmarks for any training clip; cannot build the face template".into()));
        }
        Some(compute_template(&sets)?.fit_to_canvas(CONDITION_SIZE, TEMPLATE_MARGIN)?)
    } else {
        None
    };

    let clip_ids: Vec<&str> = Split::ALL
        .iter()
        .flat_map(|s| splits.clips(*s).iter().map(|c| c.clip_id.as_str()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let jobs: Vec<Job> = clip_ids
        .iter()
        .flat_map(|clip| frames.get(*clip).into_iter().flatten().map(move |(i, p)| (clip, i, p)))
        .map(|(clip, frame_index, path)| Job {
            clip,
            frame_index: *frame_index,
            path,
            record: landmarks.get(&(clip.to_string(), *frame_index)),
        })
        .collect();

    let results: Vec<Vec<(ImageKind, Status)>> = jobs
        .par_iter()
        .map(|job| process_frame(job, &kinds, template.as_ref(), &run))
        .collect();

    let mut log = String::new();
    let mut usable: BTreeMap<(&str, ImageKind), bool> = BTreeMap::new();
    let (mut written, mut existing, mut skipped) = (0, 0, 0);
    for (job, statuses) in jobs.iter().zip(&results) {
        for (kind, status) in statuses {
            let text = match status {
                Status::Written(note) => {
                    written += 1;
                    format!("ok{note}")
                }
                Status::Exists => {
                    existing += 1;
                    "exists".to_string()
                }
                Status::Skipped(reason) => {
                    skipped += 1;
                    format!("skipped: {reason}")
                }
            };
            writeln!(log, "{}\t{}\t{}\t{}", job.clip, job.frame_index, kind.name(), text).unwrap();
            *usable.entry((job.clip, *kind)).or_default() |= status.usable();
        }
    }
    write_text(&run.preprocess_log(), &log)?;

    let mut exclusions = String::new();
    for clip in &clip_ids {
        for kind in &kinds {
            if !usable.get(&(*clip, *kind)).copied().unwrap_or(false) {
                writeln!(exclusions, "{clip}\t{}", kind.name()).unwrap();
            }
        }
    }
    write_text(&run.exclusions(), &exclusions)?;

    writeln!(
        out,
        "frames: {}, images written: {written}, already present: {existing}, skipped: {skipped}, excluded clip/condition pairs: {}",
        jobs.len(),
        exclusions.lines().count()
    )
    .unwrap();
    Ok(())
}

fn process_frame(
    job: &Job<'_>,
    kinds: &[ImageKind],
    template: Option<&LandmarkSet<f64>>,
    run: &RunLayout,
) -> Vec<(ImageKind, Status)> {
    let mut frame: Option<std::result::Result<FrameImage, String>> = None;
    let mut resized: Option<FrameImage> = None;
    kinds
        .iter()
        .map(|&kind| {
            let target = run.image_path(kind, job.clip, job.frame_index);
            if target.exists() {
                return (kind, Status::Exists);
            }
            let record = match (kind.needs_landmarks(), job.record) {
                (false, _) => None,
                (true, Some(Some(r))) => Some(r),
                (true, Some(None)) => return (kind, Status::Skipped("landmark detection failed".into())),
                (true, None) => return (kind, Status::Skipped("no landmark record".into())),
            };
            let img = match frame.get_or_insert_with(|| load_image(job.path).map_err(|e| e.to_string())) {
                Ok(img) => img,
                Err(e) => return (kind, Status::Skipped(e.clone())),
            };
            let built = build(kind, img, &mut resized, record, template);
            let status = match built.and_then(|(image, note)| save_image(&target, &image).map(|_| note)) {
                Ok(note) => Status::Written(note),
                Err(e) => Status::Skipped(e.to_string()),
            };
            (kind, status)
        })
        .collect()
}

fn build(
    kind: ImageKind,
    frame: &FrameImage,
    resized: &mut Option<FrameImage>,
    record: Option<&(ablate_core::imageops::BoundingBox, LandmarkSet<f64>)>,
    template: Option<&LandmarkSet<f64>>,
) -> Result<(FrameImage, &'static str)> {
    match kind {
        ImageKind::EntireFrame => Ok((resized.get_or_insert_with(|| make_entire_frame_condition(frame)).clone(), "")),
        ImageKind::Face => {
            let (_, lm) = record.expect("checked by caller");
            let template = template.expect("built when face images are requested");
            Ok((make_face_condition(frame, lm, template)?, ""))
        }
        ImageKind::Background => {
            let (bbox, _) = record.expect("checked by caller");
            // The crop is cut from the frame at entire-frame resolution.
            let resized = resized.get_or_insert_with(|| make_entire_frame_condition(frame));
            let sx = ENTIRE_FRAME_WIDTH as f64 / frame.width() as f64;
            let sy = ENTIRE_FRAME_HEIGHT as f64 / frame.height() as f64;
            let bg = make_background_condition(resized, &bbox.scaled(sx, sy))?;
            let note = match bg.fill_source {
                FillSource::OutsideBox => "",
                FillSource::GlobalMean => " (face box covers the frame; filled with the global mean)",
            };
            Ok((bg.image, note))
        }
    }
}
