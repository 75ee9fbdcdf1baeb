//! Synthetic corpus: each clip shows an elliptical "face" whose horizontal
//! bands encode the five trait labels, over a background texture that is
//! unrelated to the labels.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use ablate_cli::{dispatch, Cli};
use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FRAME_W: u32 = 320;
pub const FRAME_H: u32 = 240;
const RX: f64 = 45.0;
const RY: f64 = 55.0;

pub struct Fixture {
    pub manifest: PathBuf,
    pub frames: PathBuf,
    pub landmarks: PathBuf,
    pub labels: PathBuf,
    pub run: PathBuf,
    pub clips: usize,
    pub frames_per_clip: u32,
    pub failed_detections: usize,
}

fn landmark_points(cx: f64, cy: f64) -> Vec<(f64, f64)> {
    (0..68)
        .map(|i| {
            let t = i as f64 / 68.0 * std::f64::consts::TAU;
            let k = if i % 2 == 0 { 1.0 } else { 0.55 };
            (cx + k * RX * t.cos(), cy + k * RY * t.sin())
        })
        .collect()
}

fn draw_frame(rng: &mut ChaCha8Rng, texture: &[u8], traits: &[f64; 5], cx: f64, cy: f64) -> image::RgbImage {
    image::RgbImage::from_fn(FRAME_W, FRAME_H, |x, y| {
        let (dx, dy) = ((x as f64 - cx) / RX, (y as f64 - cy) / RY);
        let noise = rng.random_range(0..6u8);
        if dx * dx + dy * dy <= 1.0 {
            let band = (((dy + 1.0) / 2.0 * 5.0) as usize).min(4);
            let v = (40.0 + 180.0 * traits[band]) as u8;
            image::Rgb([v.saturating_add(noise), v, v])
        } else {
            let t = texture[((y / 16) * (FRAME_W / 16 + 1) + x / 16) as usize];
            image::Rgb([t, t.wrapping_add(noise), t / 2])
        }
    })
}

/// Writes a corpus of `uids * clips_per_uid` clips with `frames_per_clip`
/// frames each under `root`.
pub fn build(root: &Path, uids: usize, clips_per_uid: usize, frames_per_clip: u32, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = root.join("frames");
    std::fs::create_dir_all(&frames).unwrap();
    let (mut manifest, mut landmarks, mut labels) = (
        String::new(),
        String::from("clip_id,frame_index,left,top,right,bottom,points\n"),
        String::from("video_id,o,c,e,a,n\n"),
    );
    let mut failed = 0;
    let mut clip_no = 0usize;
    for u in 0..uids {
        for s in 0..clips_per_uid {
            let clip = format!("vid{u:03}.{s:03}.mp4");
            writeln!(manifest, "{clip}").unwrap();
            let traits: [f64; 5] = std::array::from_fn(|_| rng.random_range(0.2..0.8));
            let [o, c, e, a, nb] = traits;
            writeln!(labels, "{clip},{o},{c},{e},{a},{}", 1.0 - nb).unwrap();
            let texture: Vec<u8> = (0..(FRAME_W / 16 + 1) * (FRAME_H / 16 + 1)).map(|_| rng.random()).collect();
            let (cx0, cy0) = (rng.random_range(70.0..250.0), rng.random_range(70.0..170.0));
            for f in 0..frames_per_clip {
                let (cx, cy) = (cx0 + f as f64, cy0 + (f % 2) as f64);
                draw_frame(&mut rng, &texture, &traits, cx, cy)
                    .save(frames.join(format!("{clip}.{f}.png")))
                    .unwrap();
                if (clip_no * frames_per_clip as usize + f as usize) % 37 == 36 {
                    writeln!(landmarks, "{clip},{f}").unwrap();
                    failed += 1;
                    continue;
                }
                let b = [cx - RX, cy - RY, cx + RX + 1.0, cy + RY + 1.0].map(|v| v.round() as i64);
                write!(landmarks, "{clip},{f},{},{},{},{}", b[0], b[1], b[2], b[3]).unwrap();
                for (x, y) in landmark_points(cx, cy) {
                    write!(landmarks, ",{x:.3},{y:.3}").unwrap();
                }
                landmarks.push('\n');
            }
            clip_no += 1;
        }
    }
    let write = |name: &str, text: &str| {
        let p = root.join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    Fixture {
        manifest: write("clips.txt", &manifest),
        landmarks: write("landmarks.csv", &landmarks),
        labels: write("labels.csv", &labels),
        frames,
        run: root.join("run"),
        clips: uids * clips_per_uid,
        frames_per_clip,
        failed_detections: failed,
    }
}

/// Runs one command in-process; returns its console output or the error.
pub fn ablate(args: &[&str]) -> Result<String, (ablate_cli::CliError, String)> {
    let cli = Cli::try_parse_from(std::iter::once("ablate").chain(args.iter().copied())).expect("valid arguments");
    let mut out = String::new();
    match dispatch(&cli, &mut out) {
        Ok(()) => Ok(out),
        Err(e) => Err((e, out)),
    }
}

/// Runs the compiled binary; returns exit code and stdout.
pub fn ablate_bin(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ablate")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned())
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The full pipeline over a fixture, with a short training schedule.
pub fn run_pipeline(fx: &Fixture, quotas: &str, epochs: &str) -> String {
    let run = path(&fx.run);
    let mut log = ablate(&["split", "--manifest", path(&fx.manifest), "--quotas", quotas, "--out", run]).unwrap();
    log += &ablate(&[
        "preprocess",
        "--frames",
        path(&fx.frames),
        "--landmarks",
        path(&fx.landmarks),
        "--out",
        run,
    ])
    .unwrap();
    for c in ["face", "background", "entire_frame", "face_bg"] {
        log += &ablate(&[
            "train", "--condition", c, "--labels", path(&fx.labels), "--out", run, "--epochs", epochs, "--lr", "0.05",
            "--validate-every", "10", "--seed", "7",
        ])
        .unwrap();
    }
    for c in ["face", "background", "entire_frame", "face_bg"] {
        log += &ablate(&["predict", "--condition", c, "--out", run]).unwrap();
    }
    log += &ablate(&["evaluate", "--labels", path(&fx.labels), "--out", run]).unwrap();
    log
}
