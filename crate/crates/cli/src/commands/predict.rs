use std::fmt::Write as _;

use ablate_core::corpus::Split;
use ablate_core::trainkit::{pair_datasets, predict};

use super::features::clip_examples;
use super::train::{load_fusion, load_regressor};
use crate::args::PredictArgs;
use crate::config::ConfigFile;
use crate::data::{write_predictions, Condition, ImageKind, RunLayout};
use crate::error::Result;

pub fn run(args: &PredictArgs, cfg: &ConfigFile, out: &mut String) -> Result<()> {
    let condition: Condition = cfg.require(args.condition, "condition")?;
    let split = cfg.pick_or(args.split, "split", Split::Testing)?;
    let run = RunLayout::new(cfg.path(args.out.clone(), "out")?);
    let splits = run.load_splits()?;
    let clips = splits.clips(split);

    let rows = if condition == Condition::FaceBg {
        let model = load_fusion(&run)?.params;
        let face = clip_examples(&run, ImageKind::Face, clips, None)?;
        let bg = clip_examples(&run, ImageKind::Background, clips, None)?;
        pair_datasets(&face, &bg)?
            .iter()
            .map(|c| {
                let frames: Vec<_> = c.frames.iter().map(|f| (f.face.clone(), f.bg.clone())).collect();
                Ok((c.clip_id.clone(), predict(&model, &c.clip_id, &frames)?))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let model = load_regressor(&run, condition)?.params;
        clip_examples(&run, condition.image_kinds()[0], clips, None)?
            .iter()
            .map(|c| {
                let frames: Vec<_> = c.frames.iter().map(|f| f.features.clone()).collect();
                Ok((c.clip_id.clone(), predict(&model, &c.clip_id, &frames)?))
            })
            .collect::<Result<Vec<_>>>()?
    };
    write_predictions(&run.predictions(condition), &rows)?;
    writeln!(
        out,
        "{condition}: predicted {} of {} {} clips",
        rows.len(),
        clips.len(),
        split.name()
    )
    .unwrap();
    Ok(())
}
