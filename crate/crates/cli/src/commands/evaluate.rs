use std::collections::BTreeMap;
use std::fmt::Write as _;

use ablate_core::corpus::{verify_disjoint, DisjointVerdict, Split};
use ablate_core::imageops::image_set_sigma;
use ablate_core::stats::{
    compare_correlations, mean_trait_correlation, per_trait_correlation, significance, CorrelationResult,
    PredictionTable, TraitVector,
};

use crate::args::EvaluateArgs;
use crate::config::ConfigFile;
use crate::data::{index_frames, load_image, read_traits, write_text, Condition, ImageKind, RunLayout};
use crate::error::{CliError, Result};
use crate::report::{ComparisonRow, ConditionResult, Report, COMPARISONS};

pub fn run(args: &EvaluateArgs, cfg: &ConfigFile, out: &mut String) -> Result<()> {
    let run = RunLayout::new(cfg.path(args.out.clone(), "out")?);
    let allow_leakage = cfg.switch(args.leakage.allow_leakage, "allow-leakage")?;
    let alpha = cfg.pick_or(args.alpha, "alpha", 0.05)?;
    let num_models = cfg.pick_or(args.num_models, "num-models", 3)?;
    let alpha_corrected = significance(0.5, alpha, num_models)?.alpha_corrected;

    // The split check comes first: nothing is computed on a leaky partition.
    let splits = run.load_splits()?;
    let shared = match verify_disjoint(&splits) {
        DisjointVerdict::Pass => Vec::new(),
        DisjointVerdict::Fail { shared_uids } => shared_uids,
    };
    if !shared.is_empty() && !allow_leakage {
        writeln!(out, "split verdict: FAIL ({} shared source videos)", shared.len()).unwrap();
        return Err(CliError::Validation(
            "splits share source videos; refusing to evaluate (pass --allow-leakage to report anyway)".into(),
        ));
    }

    let labels = read_traits(&cfg.path(args.labels.clone(), "labels")?)?;
    let mut results: BTreeMap<Condition, CorrelationResult<f64>> = BTreeMap::new();
    let mut conditions = Vec::new();
    for condition in Condition::ALL {
        let path = run.predictions(condition);
        if !path.exists() {
            continue;
        }
        let preds: Vec<(String, TraitVector<f64>)> = read_traits(&path)?.into_iter().collect();
        let table = PredictionTable::join(&preds, &labels)?;
        let mean = mean_trait_correlation(&table)?;
        let per_trait = ["o", "c", "e", "a", "n_bar"]
            .into_iter()
            .zip(per_trait_correlation(&table))
            .map(|(name, r)| (name.to_string(), r.ok().map(|r| r.rho)))
            .collect();
        conditions.push(ConditionResult {
            condition: condition.name().to_string(),
            videos: mean.n,
            mean_trait_rho: mean.rho,
            per_trait_rho: per_trait,
        });
        results.insert(condition, mean);
    }
    if results.is_empty() {
        return Err(CliError::Validation("no prediction files found; run `ablate predict` first".into()));
    }

    let mut comparisons = Vec::new();
    for (a, b) in COMPARISONS {
        let judged = match (results.get(&a), results.get(&b)) {
            (Some(ra), Some(rb)) => Some(compare_correlations(ra, rb)?.judge(alpha, num_models)?),
            _ => None,
        };
        comparisons.push(ComparisonRow {
            first: a.name().to_string(),
            second: b.name().to_string(),
            z_obs: judged.map(|j| j.z_obs),
            p: judged.map(|j| j.p),
            significant: judged.map(|j| j.significant),
        });
    }

    let test_ids: std::collections::BTreeSet<&str> =
        splits.clips(Split::Testing).iter().map(|c| c.clip_id.as_str()).collect();
    let mut sigma = BTreeMap::new();
    for kind in [ImageKind::Face, ImageKind::Background] {
        let images = index_frames(&run.images_dir(kind))?
            .into_iter()
            .filter(|(clip, _)| test_ids.contains(clip.as_str()))
            .flat_map(|(_, frames)| frames.into_iter().map(|(_, p)| p))
            .map(|p| load_image(&p))
            .collect::<Result<Vec<_>>>()?;
        if !images.is_empty() {
            sigma.insert(kind.name().to_string(), image_set_sigma::<f64>(&images)?.sigma);
        }
    }

    let report = Report {
        confounded: !shared.is_empty(),
        split_verdict: if shared.is_empty() { "PASS" } else { "FAIL" }.to_string(),
        shared_source_videos: shared.len(),
        alpha,
        num_models,
        alpha_corrected,
        conditions,
        comparisons,
        sigma,
    };
    let text = report.to_text();
    write_text(&run.report_json(), &report.to_json())?;
    write_text(&run.report_text(), &text)?;
    out.push_str(&text);
    Ok(())
}
