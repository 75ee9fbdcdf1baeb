use std::fmt::Write as _;

use ablate_core::corpus::{
    build_splits, overlap_stats, parse_corpus_manifest, verify_disjoint, ClipNamePattern, DisjointVerdict, Split,
    SplitManifest,
};

use crate::args::SplitArgs;
use crate::config::ConfigFile;
use crate::data::{read_text, write_text, RunLayout};
use crate::error::{CliError, Result};

pub fn run(args: &SplitArgs, cfg: &ConfigFile, out: &mut String) -> Result<()> {
    let manifest_path = cfg.path(args.manifest.clone(), "manifest")?;
    let quotas = cfg.require(args.quotas, "quotas")?;
    let run = RunLayout::new(cfg.path(args.out.clone(), "out")?);
    let strict = !cfg.switch(args.leakage.allow_leakage, "allow-leakage")?;
    let pattern = match cfg.pick(args.pattern.clone(), "pattern")? {
        Some(p) => ClipNamePattern::new(&p)?,
        None => ClipNamePattern::default(),
    };

    let clips = parse_corpus_manifest(&read_text(&manifest_path)?, &pattern)?;
    let manifest = build_splits(&clips, quotas)?;
    for split in Split::ALL {
        write_text(&run.split_file(split), &manifest.to_delimited(Some(split)))?;
    }
    write_split_table(&manifest, out);
    if let DisjointVerdict::Fail { shared_uids } = verify_disjoint(&manifest) {
        return Err(CliError::Validation(format!("built splits share {} source videos", shared_uids.len())));
    }
    writeln!(out, "split verdict: PASS (no source video in more than one split)").unwrap();

    if args.legacy_split.is_empty() {
        return Ok(());
    }
    let texts = args
        .legacy_split
        .iter()
        .map(|p| read_text(p))
        .collect::<Result<Vec<_>>>()?;
    let legacy = SplitManifest::from_delimited(texts.iter().map(String::as_str))?;
    let report = overlap_stats(legacy.clips(Split::Training), legacy.clips(Split::Testing))?;
    writeln!(
        out,
        "legacy split: {:.0}% of testing clips ({}/{}) come from the same source videos as {:.0}% of training clips ({}/{})",
        100.0 * report.test_contaminated_fraction,
        report.test_contaminated,
        legacy.clips(Split::Testing).len(),
        100.0 * report.train_contaminated_fraction,
        report.train_contaminated,
        legacy.clips(Split::Training).len(),
    )
    .unwrap();
    match verify_disjoint(&legacy) {
        DisjointVerdict::Pass => {
            writeln!(out, "legacy verdict: PASS").unwrap();
            Ok(())
        }
        DisjointVerdict::Fail { shared_uids } => {
            writeln!(out, "legacy verdict: FAIL ({} shared source videos)", shared_uids.len()).unwrap();
            if strict {
                Err(CliError::Validation(
                    "legacy split leaks source videos across splits (use --allow-leakage to only report)".into(),
                ))
            } else {
                Ok(())
            }
        }
    }
}

fn write_split_table(m: &SplitManifest, out: &mut String) {
    writeln!(out, "{:<12} {:>8} {:>8} {:>8}", "split", "clips", "UIDs", "vid/UID").unwrap();
    for split in Split::ALL {
        let ratio = m
            .clips_per_uid(split)
            .map_or_else(|| "-".to_string(), |r| format!("{r:.2}"));
        writeln!(
            out,
            "{:<12} {:>8} {:>8} {:>8}",
            split.name(),
            m.clips(split).len(),
            m.uid_count(split),
            ratio
        )
        .unwrap();
    }
}
