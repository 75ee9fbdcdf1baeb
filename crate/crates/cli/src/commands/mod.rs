use std::fmt::Write as _;

use ablate_core::imageops::image_set_sigma;
use ablate_core::stats::{compare_correlations, CorrelationResult};

use crate::args::{Cli, Command, CompareArgs, SigmaArgs};
use crate::config::ConfigFile;
use crate::data::{index_frames, load_image};
use crate::error::{CliError, Result};

pub mod evaluate;
mod features;
pub mod predict;
pub mod preprocess;
pub mod split;
pub mod train;

/// Runs one command, appending its console output to `out`. On error, `out`
/// still holds whatever was reported before the failure.
pub fn dispatch(cli: &Cli, out: &mut String) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match &cli.command {
        Command::Split(a) => split::run(a, &cfg, out),
        Command::Preprocess(a) => preprocess::run(a, &cfg, out),
        Command::Train(a) => train::run(a, &cfg, out),
        Command::Predict(a) => predict::run(a, &cfg, out),
        Command::Evaluate(a) => evaluate::run(a, &cfg, out),
        Command::Sigma(a) => sigma(a, out),
        Command::Compare(a) => compare(a, &cfg, out),
    }
}

fn sigma(args: &SigmaArgs, out: &mut String) -> Result<()> {
    let mut paths: Vec<_> = index_frames(&args.dir)?
        .into_values()
        .flat_map(|frames| frames.into_iter().map(|(_, p)| p))
        .collect();
    if paths.is_empty() {
        // Not a frame tree; take every PNG in the directory.
        for entry in std::fs::read_dir(&args.dir).map_err(CliError::io(&args.dir))? {
            let p = entry.map_err(CliError::io(&args.dir))?.path();
            if p.extension().is_some_and(|e| e == "png") {
                paths.push(p);
            }
        }
        paths.sort();
    }
    let images = paths.iter().map(|p| load_image(p)).collect::<Result<Vec<_>>>()?;
    let stat = image_set_sigma::<f64>(&images)?;
    writeln!(out, "sigma = {:.4} over {} images", stat.sigma, images.len()).unwrap();
    Ok(())
}

fn compare(args: &CompareArgs, cfg: &ConfigFile, out: &mut String) -> Result<()> {
    let alpha = cfg.pick_or(args.alpha, "alpha", 0.05)?;
    let num_models = cfg.pick_or(args.num_models, "num-models", 3)?;
    let a = CorrelationResult::from_rho(args.rho1, args.n1)?;
    let b = CorrelationResult::from_rho(args.rho2, args.n2)?;
    let r = compare_correlations(&a, &b)?.judge(alpha, num_models)?;
    writeln!(out, "z_obs = {:.4}", r.z_obs).unwrap();
    writeln!(out, "p = {:.3e}", r.p).unwrap();
    writeln!(out, "alpha / m = {:.4}", r.alpha_corrected).unwrap();
    writeln!(out, "significant: {}", if r.significant { "yes *" } else { "no" }).unwrap();
    Ok(())
}
