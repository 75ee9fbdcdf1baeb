use std::fmt::Write as _;

use ablate_core::corpus::{verify_disjoint, DisjointVerdict, Split};
use ablate_core::trainkit::{
    pair_datasets, train, train_fusion, Checkpoint, FeatureExtractor, FusionModel, HistoryEntry, Regressor,
    TrainConfig,
};

use super::features::clip_examples;
use crate::args::{HyperArgs, TrainArgs};
use crate::config::ConfigFile;
use crate::data::{read_text, read_traits, write_text, Condition, ImageKind, RunLayout};
use crate::error::{CliError, Result};

pub fn hyper_config(h: &HyperArgs, cfg: &ConfigFile) -> Result<TrainConfig<f64>> {
    let d = TrainConfig::<f64>::default();
    Ok(TrainConfig {
        epochs: cfg.pick_or(h.epochs, "epochs", d.epochs)?,
        lr: cfg.pick_or(h.lr, "lr", d.lr)?,
        momentum: cfg.pick_or(h.momentum, "momentum", d.momentum)?,
        validate_every: cfg.pick_or(h.validate_every, "validate-every", d.validate_every)?,
        batch_size: cfg.pick_or(h.batch_size, "batch-size", d.batch_size)?,
        seed: cfg.pick_or(h.seed, "seed", d.seed)?,
    })
}

pub fn load_regressor(run: &RunLayout, condition: Condition) -> Result<Checkpoint<f64>> {
    let path = run.checkpoint(condition);
    if !path.exists() {
        return Err(CliError::Validation(format!(
            "{} not found; train the {condition} condition first",
            path.display()
        )));
    }
    Ok(Checkpoint::from_text(&read_text(&path)?)?)
}

pub fn load_fusion(run: &RunLayout) -> Result<Checkpoint<f64, FusionModel<f64>>> {
    let path = run.checkpoint(Condition::FaceBg);
    if !path.exists() {
        return Err(CliError::Validation(format!(
            "{} not found; train the face_bg condition first",
            path.display()
        )));
    }
    Ok(Checkpoint::from_text(&read_text(&path)?)?)
}

fn history_csv(history: &[HistoryEntry<f64>]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for h in history {
        writeln!(s, "{},{},{}", h.epoch, h.train_loss, h.val_loss).unwrap();
    }
    s
}

pub fn run(args: &TrainArgs, cfg: &ConfigFile, out: &mut String) -> Result<()> {
    let condition: Condition = cfg.require(args.condition, "condition")?;
    let labels = read_traits(&cfg.path(args.labels.clone(), "labels")?)?;
    let run = RunLayout::new(cfg.path(args.out.clone(), "out")?);
    let config = hyper_config(&args.hyper, cfg)?;
    let splits = run.load_splits()?;
    if let DisjointVerdict::Fail { shared_uids } = verify_disjoint(&splits) {
        return Err(CliError::Validation(format!(
            "splits share {} source videos; refusing to train",
            shared_uids.len()
        )));
    }
    let (tr_clips, va_clips) = (splits.clips(Split::Training), splits.clips(Split::Validation));

    let (text, epoch, val_loss, history) = if condition == Condition::FaceBg {
        let face_ckpt = load_regressor(&run, Condition::Face)?;
        let bg_ckpt = load_regressor(&run, Condition::Background)?;
        let paired = |clips| -> Result<_> {
            let face = clip_examples(&run, ImageKind::Face, clips, Some(&labels))?;
            let bg = clip_examples(&run, ImageKind::Background, clips, Some(&labels))?;
            Ok(pair_datasets(&face, &bg)?)
        };
        let (tr, va) = (paired(tr_clips)?, paired(va_clips)?);
        let o = train_fusion(&face_ckpt, &bg_ckpt, &tr, &va, &config)?;
        (o.best.to_text(), o.best.epoch, o.best.val_loss, o.history)
    } else {
        let kind = condition.image_kinds()[0];
        let tr = clip_examples(&run, kind, tr_clips, Some(&labels))?;
        let va = clip_examples(&run, kind, va_clips, Some(&labels))?;
        writeln!(
            out,
            "{condition}: {} training clips, {} validation clips with images",
            tr.len(),
            va.len()
        )
        .unwrap();
        let model = Regressor::zeros(FeatureExtractor::default().feature_dim());
        let o = train(model, &tr, &va, &config)?;
        (o.best.to_text(), o.best.epoch, o.best.val_loss, o.history)
    };
    if !val_loss.is_finite() {
        return Err(CliError::Numerical(format!("validation loss is {val_loss}")));
    }
    write_text(&run.checkpoint(condition), &text)?;
    write_text(&run.history(condition), &history_csv(&history))?;
    writeln!(out, "{condition}: best checkpoint at epoch {epoch}, validation MAE {val_loss:.6}").unwrap();
    Ok(())
}
