//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_SPEC_DEFECTS` are run exactly as written and are
//! expected to fail; the target fails if any other criterion fails, or if a
//! known defect starts passing.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use ablate_core::corpus::{
    build_splits, overlap_stats, verify_disjoint, ClipRef, Split, SplitManifest, SplitQuota,
};
use ablate_core::imageops::{fit_similarity, image_set_sigma, FrameImage, Point, SimilarityTransform};
use ablate_core::stats::{
    compare_correlations, fisher_standard_error, fisher_z, p_from_z, pearson, significance, CorrelationResult,
    TraitVector,
};
use ablate_core::trainkit::{
    batch_loss, gradient, pair_datasets, train_fusion, Checkpoint, ClipExamples, FrameFeatures,
    FusionModel, Regressor, Sample, TrainConfig, NUM_TRAITS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_SPEC_DEFECTS: &[u32] = &[3];

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// (z_obs, printed p, starred) for the three model families, six comparisons each.
const PUBLISHED_COMPARISONS: [(&str, [(f64, f64, bool); 6]); 3] = [
    (
        "Deep Impression",
        [
            (4.91, 4.45e-7, true),
            (5.96, 1.26e-9, true),
            (6.83, 4.06e-12, true),
            (1.93, 0.027, false),
            (0.89, 0.19, false),
            (1.04, 0.148, false),
        ],
    ),
    (
        "ResNet18 v1",
        [
            (0.85, 0.198, false),
            (1.27, 0.103, false),
            (5.08, 1.76e-7, true),
            (4.22, 1.10e-5, true),
            (3.81, 6.47e-5, true),
            (0.41, 0.339, false),
        ],
    ),
    (
        "ResNet18 v2",
        [
            (3.11, 9.35e-4, true),
            (-1.1, 0.136, false),
            (3.71, 9.51e-5, true),
            (0.63, 0.266, false),
            (4.82, 6.83e-7, true),
            (-4.2, 1.30e-5, true),
        ],
    ),
];

fn published_rows() -> impl Iterator<Item = (String, f64, f64, bool)> {
    PUBLISHED_COMPARISONS
        .iter()
        .flat_map(|(model, rows)| rows.iter().enumerate().map(move |(i, &(z, p, s))| (format!("{model} row {}", i + 1), z, p, s)))
}

fn golden_p_values() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (name, z, printed, _) in published_rows() {
        let p = p_from_z(z);
        let rel = (p - printed).abs() / printed;
        ensure!(rel <= 0.15, "{name}: p_from_z({z}) = {p:.3e}, printed {printed:.3e} ({:.1}% off)", 100.0 * rel);
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed();
    ensure!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    Ok(format!("18 rows, worst relative deviation {:.1}%, {elapsed:?}", 100.0 * worst))
}

fn star_pattern() -> Outcome {
    for (name, z, printed, starred) in published_rows() {
        for p in [p_from_z(z), printed] {
            let s = significance(p, 0.05, 3).map_err(|e| e.to_string())?;
            ensure!(s.significant == starred, "{name}: p = {p:.3e} gives significant = {}", s.significant);
        }
    }
    Ok("10 starred, 8 unstarred at alpha / m = 0.0167".into())
}

fn standard_error() -> Outcome {
    let se: f64 = fisher_standard_error(1676, 1676).map_err(|e| e.to_string())?;
    let exact = (2.0f64 / 1673.0).sqrt();
    ensure!(
        (se - 0.034577).abs() <= 1e-6,
        "SE(1676, 1676) = sqrt(2/1673) = {se:.10} (closed form {exact:.10}); the required value 0.034577 is {:.2e} away, \
         outside the 1e-6 tolerance. No sample size gives 0.034577 (n = 1675.9 would), so the stated value is a rounding \
         slip and is kept unmet rather than altered",
        (se - 0.034577).abs()
    );
    Ok(format!("SE = {se:.10}"))
}

fn clip(uid: &str, segment: u32) -> ClipRef {
    ClipRef {
        clip_id: format!("{uid}.{segment:03}.mp4"),
        uid: uid.to_string(),
        segment,
    }
}

fn spread(uids: &[String], clips: usize) -> Vec<ClipRef> {
    let (base, extra) = (clips / uids.len(), clips % uids.len());
    uids.iter()
        .enumerate()
        .flat_map(|(i, u)| (0..base + usize::from(i < extra)).map(move |s| clip(u, s as u32)))
        .collect()
}

fn published_splits() -> Outcome {
    let uids: Vec<String> = (0..3060).map(|i| format!("vid{i:04}")).collect();
    let mut corpus = spread(&uids[..2060], 6744);
    corpus.extend(spread(&uids[2060..2560], 1676));
    corpus.extend(spread(&uids[2560..], 1580));
    corpus.reverse();
    let m = build_splits(&corpus, SplitQuota::new(2060, 500, 500)).map_err(|e| e.to_string())?;
    ensure!(verify_disjoint(&m).is_pass(), "splits share source videos");
    let got: Vec<(usize, usize, String)> = Split::ALL
        .iter()
        .map(|s| (m.clips(*s).len(), m.uid_count(*s), format!("{:.2}", m.clips_per_uid(*s).unwrap_or(0.0))))
        .collect();
    let want = [(6744, 2060, "3.27"), (1676, 500, "3.35"), (1580, 500, "3.16")];
    ensure!(
        got.iter().zip(want).all(|(g, w)| (g.0, g.1, g.2.as_str()) == w),
        "got {got:?}"
    );

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = dir.path().join("clips.txt");
    let names: String = corpus.iter().map(|c| format!("{}\n", c.clip_id)).collect();
    fs::write(&manifest, names).map_err(|e| e.to_string())?;
    let out = common::ablate(&[
        "split",
        "--manifest",
        common::path(&manifest),
        "--quotas",
        "2060,500,500",
        "--out",
        common::path(dir.path()),
    ])
    .map_err(|(e, _)| e.to_string())?;
    for ratio in ["3.27", "3.35", "3.16"] {
        ensure!(out.contains(ratio), "CLI output lacks {ratio}:\n{out}");
    }
    ensure!(out.contains("split verdict: PASS"), "CLI output:\n{out}");
    Ok("6744/1676/1580 clips over 2060/500/500 UIDs: 3.27 / 3.35 / 3.16, disjoint".into())
}

fn legacy_fixture() -> (Vec<ClipRef>, Vec<ClipRef>) {
    let shared: Vec<String> = (0..10).map(|i| format!("shared{i}")).collect();
    let train_only: Vec<String> = (0..20).map(|i| format!("train{i}")).collect();
    let test_only: Vec<String> = (0..5).map(|i| format!("test{i}")).collect();
    let mut train = spread(&shared, 46);
    train.extend(spread(&train_only, 54));
    let mut test: Vec<ClipRef> = spread(&shared, 83).into_iter().map(|c| clip(&c.uid, c.segment + 100)).collect();
    test.extend(spread(&test_only, 17));
    (train, test)
}

fn leakage() -> Outcome {
    let (train, test) = legacy_fixture();
    let r = overlap_stats(&train, &test).map_err(|e| e.to_string())?;
    ensure!(
        (r.test_contaminated_fraction, r.train_contaminated_fraction) == (0.83, 0.46),
        "fractions {} / {}",
        r.test_contaminated_fraction,
        r.train_contaminated_fraction
    );

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let legacy = SplitManifest::from_assignments(
        train
            .iter()
            .map(|c| (c.clone(), Split::Training))
            .chain(test.iter().map(|c| (c.clone(), Split::Testing))),
    );
    let splits = dir.path().join("run/splits");
    fs::create_dir_all(&splits).map_err(|e| e.to_string())?;
    let mut legacy_files = Vec::new();
    for s in Split::ALL {
        let p = splits.join(format!("{}.csv", s.name()));
        fs::write(&p, legacy.to_delimited(Some(s))).map_err(|e| e.to_string())?;
        legacy_files.push(p);
    }
    let labels = dir.path().join("labels.csv");
    fs::write(&labels, "video_id,o,c,e,a,n\n").map_err(|e| e.to_string())?;
    let run = dir.path().join("run");
    let (code, out) =
        common::ablate_bin(&["evaluate", "--strict", "--labels", common::path(&labels), "--out", common::path(&run)]);
    ensure!(code == 2, "evaluate --strict exited with {code}:\n{out}");

    // The split command's audit of the same files.
    let manifest = dir.path().join("clips.txt");
    fs::write(&manifest, "a.000.mp4\nb.000.mp4\nc.000.mp4\n").map_err(|e| e.to_string())?;
    let fresh = dir.path().join("fresh");
    let mut args = vec!["split", "--manifest", common::path(&manifest), "--quotas", "1,1,1", "--out", common::path(&fresh)];
    args.push("--legacy-split");
    args.extend(legacy_files.iter().map(|p| common::path(p)));
    let (code, out) = common::ablate_bin(&args);
    ensure!(code == 2, "split with a leaky legacy split exited with {code}");
    ensure!(out.contains("83% of testing clips (83/100)") && out.contains("46% of training clips (46/100)"), "{out}");
    Ok("83% / 46% shared, evaluate --strict exits 2".into())
}

fn numerical_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    // (a) similarity round trip
    let mut worst_residual: f64 = 0.0;
    for _ in 0..1000 {
        let t = SimilarityTransform::from_angle(
            rng.random_range(0.2..5.0),
            rng.random_range(-3.1..3.1),
            [rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0)],
        );
        let src: Vec<Point<f64>> =
            (0..68).map(|_| Point::new(rng.random_range(0.0..256.0), rng.random_range(0.0..256.0))).collect();
        let dst: Vec<Point<f64>> = src.iter().map(|p| t.apply(*p)).collect();
        let fit = fit_similarity(&src, &dst).map_err(|e| e.to_string())?;
        let back = fit.inverse();
        for (s, d) in src.iter().zip(&dst) {
            let r = back.apply(*d);
            worst_residual = worst_residual.max((r.x - s.x).hypot(r.y - s.y));
        }
    }
    ensure!(worst_residual < 1e-9, "round-trip residual {worst_residual:e}");

    // (b) analytic gradient against central differences
    let (h, mut checked, mut worst_grad) = (1e-5, 0, 0.0f64);
    while checked < 100 {
        let dim = rng.random_range(1..6);
        let w = (0..dim * NUM_TRAITS).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut model =
            Regressor::from_parts(dim, w, std::array::from_fn(|_| rng.random_range(-1.0..1.0))).map_err(|e| e.to_string())?;
        let batch: Vec<Sample<f64>> = (0..rng.random_range(1..5))
            .map(|_| Sample {
                features: (0..dim).map(|_| rng.random()).collect(),
                target: TraitVector::new(std::array::from_fn(|_| rng.random())).unwrap(),
            })
            .collect();
        let near_kink = batch.iter().any(|s| {
            model.forward(&s.features).iter().zip(s.target.to_array()).any(|(y, t)| (y - t).abs() < 1e-3)
        });
        if near_kink {
            continue;
        }
        let g = gradient(&model, &batch).map_err(|e| e.to_string())?;
        let p0 = model.params();
        for i in 0..p0.len() {
            let mut p = p0.clone();
            p[i] = p0[i] + h;
            model.set_params(&p).map_err(|e| e.to_string())?;
            let up = batch_loss(&model, &batch).map_err(|e| e.to_string())?;
            p[i] = p0[i] - h;
            model.set_params(&p).map_err(|e| e.to_string())?;
            let down = batch_loss(&model, &batch).map_err(|e| e.to_string())?;
            let fd = (up - down) / (2.0 * h);
            worst_grad = worst_grad.max((fd - g[i]).abs() / g[i].abs().max(fd.abs()).max(1e-3));
        }
        checked += 1;
    }
    ensure!(worst_grad < 1e-6, "gradient relative error {worst_grad:e}");

    // (c) pearson affine invariance, Fisher antisymmetry
    let (mut worst_affine, mut worst_fisher) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(4..60);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (rng.random_range(0.1..10.0), rng.random_range(-50.0..50.0));
        let r = pearson(&x, &y).map_err(|e| e.to_string())?.rho;
        let scaled: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let rs = pearson(&scaled, &y).map_err(|e| e.to_string())?.rho;
        worst_affine = worst_affine.max((r - rs).abs());

        let r1 = CorrelationResult::from_rho(rng.random_range(-0.99..0.99), n).map_err(|e| e.to_string())?;
        let r2 = CorrelationResult::from_rho(rng.random_range(-0.99..0.99), rng.random_range(4..500))
            .map_err(|e| e.to_string())?;
        let ab = compare_correlations::<f64>(&r1, &r2).map_err(|e| e.to_string())?;
        let ba = compare_correlations::<f64>(&r2, &r1).map_err(|e| e.to_string())?;
        worst_fisher = worst_fisher.max((ab.z_obs + ba.z_obs).abs()).max((ab.p - ba.p).abs());
        let z: f64 = fisher_z(r1.rho).map_err(|e| e.to_string())?;
        let zm: f64 = fisher_z(-r1.rho).map_err(|e| e.to_string())?;
        worst_fisher = worst_fisher.max((z + zm).abs());
    }
    ensure!(worst_affine < 1e-12, "pearson affine deviation {worst_affine:e}");
    ensure!(worst_fisher < 1e-12, "Fisher antisymmetry deviation {worst_fisher:e}");

    // (d) sigma against a brute-force integer oracle
    for _ in 0..10 {
        let n = rng.random_range(2..9usize);
        let set: Vec<FrameImage> = (0..n)
            .map(|_| FrameImage::new(8, 8, (0..8 * 8 * 3).map(|_| rng.random()).collect()).unwrap())
            .collect();
        // Σ_p Σ_i (N·v_i − S_p)² = N² Σ_p Σ_i (v_i − mean_p)²; every term is an exact integer.
        let positions = 8 * 8 * 3;
        let mut num: u64 = 0;
        for p in 0..positions {
            let s: i64 = set.iter().map(|im| im.pixels()[p] as i64).sum();
            for im in &set {
                let d = n as i64 * im.pixels()[p] as i64 - s;
                num += (d * d) as u64;
            }
        }
        let den = (n * n * n * positions) as u64;
        let oracle = (num as f64 / den as f64).sqrt();
        let got = image_set_sigma::<f64>(&set).map_err(|e| e.to_string())?.sigma;
        ensure!(got.to_bits() == oracle.to_bits(), "sigma {got} vs oracle {oracle}");
    }
    Ok(format!(
        "round trip {worst_residual:.1e}, gradient {worst_grad:.1e}, affine {worst_affine:.1e}, Fisher {worst_fisher:.1e}, sigma bit-exact"
    ))
}

fn protocol() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = common::build(dir.path(), 100, 2, 5, 2024);
    let start = Instant::now();
    common::run_pipeline(&fx, "60,20,20", "100");
    let elapsed = start.elapsed();
    ensure!(elapsed.as_secs_f64() < 60.0, "pipeline took {elapsed:?}");

    let read = |p: std::path::PathBuf| fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()));
    let models = fx.run.join("models");
    let face: Checkpoint<f64> = Checkpoint::from_text(&read(models.join("face.ckpt"))?).map_err(|e| e.to_string())?;
    let bg: Checkpoint<f64> = Checkpoint::from_text(&read(models.join("background.ckpt"))?).map_err(|e| e.to_string())?;
    let fused: Checkpoint<f64, FusionModel<f64>> =
        Checkpoint::from_text(&read(models.join("face_bg.ckpt"))?).map_err(|e| e.to_string())?;
    ensure!(
        fused.params.face_branch.to_bytes() == face.params.to_bytes()
            && fused.params.bg_branch.to_bytes() == bg.params.to_bytes(),
        "fusion checkpoint branches differ from the trained face and background models"
    );

    for cond in ["face", "background", "entire_frame", "face_bg"] {
        let text = read(models.join(format!("{cond}.ckpt")))?;
        let ckpt = if cond == "face_bg" {
            let c: Checkpoint<f64, FusionModel<f64>> = Checkpoint::from_text(&text).map_err(|e| e.to_string())?;
            (c.epoch, c.val_loss)
        } else {
            let c: Checkpoint<f64> = Checkpoint::from_text(&text).map_err(|e| e.to_string())?;
            (c.epoch, c.val_loss)
        };
        let history = read(models.join(format!("{cond}.history.csv")))?;
        let mut best: Option<(usize, f64)> = None;
        for line in history.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let (epoch, val): (usize, f64) = (f[0].parse().unwrap(), f[2].parse().unwrap());
            if best.is_none_or(|(_, v)| val < v) {
                best = Some((epoch, val));
            }
        }
        ensure!(best == Some(ckpt), "{cond}: checkpoint {ckpt:?}, history minimum {best:?}");

        let preds = read(fx.run.join(format!("predictions/{cond}.csv")))?;
        let mut rows = 0;
        for line in preds.lines().skip(1) {
            rows += 1;
            for v in line.split(',').skip(1) {
                let v: f64 = v.parse().map_err(|_| format!("{cond}: bad value {v}"))?;
                ensure!((0.0..=1.0).contains(&v), "{cond}: prediction {v} outside [0, 1]");
            }
        }
        ensure!(rows > 0, "{cond}: no predictions");
    }
    Ok(format!("200 clips x 5 frames in {:.1} s; branches frozen; best = history minimum; predictions in [0, 1]", elapsed.as_secs_f64()))
}

fn noise_branch_is_suppressed() -> Outcome {
    println!("  not reproducible without the real video corpus and deep-network training:");
    println!("    absolute per-condition correlation values on the real corpus");
    println!("    dataset statistics sigma_face = 54.1, sigma_bg = 71.6");
    println!("    the finding that background degrades performance on the real corpus");

    let dim = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let w = (0..dim * NUM_TRAITS).map(|i| ((i * 7 % 11) as f64 - 5.0) / (20.0 * dim as f64)).collect();
    let signal = Regressor::from_parts(dim, w, [0.5, 0.4, 0.6, 0.45, 0.55]).map_err(|e| e.to_string())?;
    let nw = (0..dim * NUM_TRAITS).map(|_| rng.random_range(-0.5..0.5)).collect();
    let noise =
        Regressor::from_parts(dim, nw, std::array::from_fn(|_| rng.random_range(-0.5..0.5))).map_err(|e| e.to_string())?;
    let features = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.random()).collect() };
    let mut split = |prefix: &str, n: usize| {
        let mut face = Vec::new();
        let mut bg = Vec::new();
        for i in 0..n {
            let x = features(&mut rng);
            let target = TraitVector::new(signal.forward(&x)).unwrap();
            let mk = |frames: Vec<Vec<f64>>| ClipExamples {
                clip_id: format!("{prefix}{i}.000.mp4"),
                uid: format!("{prefix}{i}"),
                target,
                frames: frames
                    .into_iter()
                    .enumerate()
                    .map(|(k, features)| FrameFeatures { frame_index: k as u32, features })
                    .collect(),
            };
            face.push(mk(vec![x.clone(); 3]));
            bg.push(mk((0..3).map(|_| features(&mut rng)).collect()));
        }
        pair_datasets(&face, &bg).unwrap()
    };
    let (train, val) = (split("t", 60), split("v", 20));
    let ckpt = |params| Checkpoint { epoch: 0, val_loss: 0.0, config: TrainConfig::default(), params };
    let config = TrainConfig { epochs: 3000, lr: 0.01, validate_every: 100, batch_size: 60, ..Default::default() };
    let out = train_fusion(&ckpt(signal), &ckpt(noise), &train, &val, &config).map_err(|e| e.to_string())?;
    let (mut face_mag, mut bg_mag) = (0.0, 0.0);
    for c in &val {
        let f = &c.frames[0];
        let (a, b) = out.best.params.contributions(&f.face, &f.bg);
        face_mag += a;
        bg_mag += b;
    }
    let share = bg_mag / (face_mag + bg_mag);
    ensure!(share < 0.10, "noise branch share {:.1}%", 100.0 * share);
    Ok(format!("substitute: noise branch share of fused output {:.2}%", 100.0 * share))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 8] = [
        (1, "published p-values from z_obs", golden_p_values),
        (2, "published significance stars", star_pattern),
        (3, "standard error for 1676 vs 1676", standard_error),
        (4, "published split sizes", published_splits),
        (5, "legacy split leakage", leakage),
        (6, "numerical properties", numerical_properties),
        (7, "end-to-end protocol", protocol),
        (8, "desk-scale substitute", noise_branch_is_suppressed),
    ];
    let mut failed = BTreeSet::new();
    for (id, name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {id}. {name}: {detail}"),
            Err(why) => {
                let tag = if KNOWN_SPEC_DEFECTS.contains(&id) { " (known defect in the requirement)" } else { "" };
                println!("[FAIL] {id}. {name}{tag}: {why}");
                failed.insert(id);
            }
        }
    }
    let known: BTreeSet<u32> = KNOWN_SPEC_DEFECTS.iter().copied().collect();
    let unexpected: Vec<_> = failed.difference(&known).collect();
    let now_passing: Vec<_> = known.difference(&failed).collect();
    println!(
        "{} of {} criteria pass; unexpected failures: {unexpected:?}; known defects now passing: {now_passing:?}",
        criteria.len() - failed.len(),
        criteria.len()
    );
    if unexpected.is_empty() && now_passing.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
