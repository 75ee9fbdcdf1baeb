//! Run-directory layout and the file formats read and written by the commands.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ablate_core::corpus::{Split, SplitManifest};
use ablate_core::imageops::{BoundingBox, FrameImage, LandmarkSet, NUM_LANDMARKS};
use ablate_core::stats::{label_transform, TraitVector};
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{CliError, Result};

/// The four experimental conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Condition {
    Face,
    Background,
    FaceBg,
    EntireFrame,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::Face, Condition::Background, Condition::FaceBg, Condition::EntireFrame];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Face => "face",
            Condition::Background => "background",
            Condition::FaceBg => "face_bg",
            Condition::EntireFrame => "entire_frame",
        }
    }

    /// Short label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Condition::Face => "face",
            Condition::Background => "bg",
            Condition::FaceBg => "face+bg",
            Condition::EntireFrame => "entire frame",
        }
    }

    /// Image kinds the condition reads.
    pub fn image_kinds(self) -> &'static [ImageKind] {
        match self {
            Condition::Face => &[ImageKind::Face],
            Condition::Background => &[ImageKind::Background],
            Condition::FaceBg => &[ImageKind::Face, ImageKind::Background],
            Condition::EntireFrame => &[ImageKind::EntireFrame],
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown condition `{s}`"))
    }
}

/// A preprocessed image family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ImageKind {
    Face,
    Background,
    EntireFrame,
}

impl ImageKind {
    pub fn name(self) -> &'static str {
        match self {
            ImageKind::Face => "face",
            ImageKind::Background => "background",
            ImageKind::EntireFrame => "entire_frame",
        }
    }

    pub fn needs_landmarks(self) -> bool {
        self != ImageKind::EntireFrame
    }
}

/// Paths inside a run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn splits_dir(&self) -> PathBuf {
        self.root.join("splits")
    }

    pub fn split_file(&self, split: Split) -> PathBuf {
        self.splits_dir().join(format!("{}.csv", split.name()))
    }

    pub fn images_dir(&self, kind: ImageKind) -> PathBuf {
        self.root.join("conditions").join(kind.name())
    }

    pub fn image_path(&self, kind: ImageKind, clip_id: &str, frame_index: u32) -> PathBuf {
        self.images_dir(kind).join(frame_file_name(clip_id, frame_index))
    }

    pub fn checkpoint(&self, condition: Condition) -> PathBuf {
        self.root.join("models").join(format!("{}.ckpt", condition.name()))
    }

    pub fn history(&self, condition: Condition) -> PathBuf {
        self.root.join("models").join(format!("{}.history.csv", condition.name()))
    }

    pub fn predictions(&self, condition: Condition) -> PathBuf {
        self.root.join("predictions").join(format!("{}.csv", condition.name()))
    }

    pub fn preprocess_log(&self) -> PathBuf {
        self.root.join("preprocess.log")
    }

    pub fn exclusions(&self) -> PathBuf {
        self.root.join("excluded_clips.txt")
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn report_text(&self) -> PathBuf {
        self.root.join("report.txt")
    }

    pub fn load_splits(&self) -> Result<SplitManifest> {
        let mut texts = Vec::new();
        for split in Split::ALL {
            let path = self.split_file(split);
            if !path.exists() {
                return Err(CliError::Validation(format!(
                    "{} not found; run `ablate split` first",
                    path.display()
                )));
            }
            texts.push(read_text(&path)?);
        }
        Ok(SplitManifest::from_delimited(texts.iter().map(String::as_str))?)
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub fn frame_file_name(clip_id: &str, frame_index: u32) -> String {
    format!("{clip_id}.{frame_index}.png")
}

/// Splits `<clip_id>.<frame_index>.png` into its parts.
pub fn parse_frame_file_name(name: &str) -> Option<(String, u32)> {
    let stem = name.strip_suffix(".png")?;
    let (clip, idx) = stem.rsplit_once('.')?;
    if clip.is_empty() {
        return None;
    }
    Some((clip.to_string(), idx.parse().ok()?))
}

/// Frame images in `dir`, grouped by clip and sorted by frame index.
pub fn index_frames(dir: &Path) -> Result<BTreeMap<String, Vec<(u32, PathBuf)>>> {
    let mut out: BTreeMap<String, Vec<(u32, PathBuf)>> = BTreeMap::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in std::fs::read_dir(dir).map_err(CliError::io(dir))? {
        let entry = entry.map_err(CliError::io(dir))?;
        let name = entry.file_name();
        if let Some((clip, idx)) = name.to_str().and_then(parse_frame_file_name) {
            out.entry(clip).or_default().push((idx, entry.path()));
        }
    }
    for frames in out.values_mut() {
        frames.sort();
    }
    Ok(out)
}

pub fn load_image(path: &Path) -> Result<FrameImage> {
    let img = image::open(path)
        .map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(FrameImage::new(w, h, img.into_raw())?)
}

pub fn save_image(path: &Path, frame: &FrameImage) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let file = std::fs::File::create(path).map_err(CliError::io(path))?;
    let encoder = PngEncoder::new_with_quality(std::io::BufWriter::new(file), CompressionType::Fast, FilterType::Sub);
    encoder
        .write_image(frame.pixels(), frame.width() as u32, frame.height() as u32, ExtendedColorType::Rgb8)
        .map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))
}

/// One row of the landmark file. `None` marks a frame where detection failed.
pub type LandmarkRecord = Option<(BoundingBox, LandmarkSet<f64>)>;

/// Landmark file: `clip_id,frame_index,left,top,right,bottom,x0,y0,...,x67,y67`.
/// A row with only the first two fields (or empty remaining fields) records a
/// failed detection.
pub fn read_landmarks(path: &Path) -> Result<BTreeMap<(String, u32), LandmarkRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |msg: &str| CliError::Malformed(format!("{} row {}: {msg}", path.display(), i + 2));
        let clip = row.get(0).filter(|s| !s.is_empty()).ok_or_else(|| bad("missing clip_id"))?;
        let frame: u32 = row
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad frame_index"))?;
        let rest: Vec<&str> = row.iter().skip(2).map(str::trim).collect();
        let record = if rest.iter().all(|s| s.is_empty()) {
            None
        } else {
            if rest.len() != 4 + 2 * NUM_LANDMARKS {
                return Err(bad(&format!("expected {} values, got {}", 4 + 2 * NUM_LANDMARKS, rest.len())));
            }
            let b: Vec<i64> = rest[..4]
                .iter()
                .map(|s| s.parse().map_err(|_| bad("bounding box must be integers")))
                .collect::<Result<_>>()?;
            let coords: Vec<f64> = rest[4..]
                .iter()
                .map(|s| s.parse().map_err(|_| bad("landmark coordinates must be numbers")))
                .collect::<Result<_>>()?;
            let bbox = BoundingBox::new(b[0], b[1], b[2], b[3]).map_err(|e| bad(&e.to_string()))?;
            let lm = LandmarkSet::from_flat(&coords).map_err(|e| bad(&e.to_string()))?;
            Some((bbox, lm))
        };
        if out.insert((clip.to_string(), frame), record).is_some() {
            return Err(bad("duplicate (clip_id, frame_index)"));
        }
    }
    Ok(out)
}

/// Trait table: `id,o,c,e,a,<n>` with one header row. When the last header is
/// `n_bar` the values are stored as-is; otherwise the last column is raw
/// neuroticism and is inverted.
pub fn read_traits(path: &Path) -> Result<BTreeMap<String, TraitVector<f64>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    if headers.len() != 6 {
        return Err(CliError::Malformed(format!(
            "{}: expected 6 columns (id and five traits), got {}",
            path.display(),
            headers.len()
        )));
    }
    let inverted = headers.get(5).is_some_and(|h| h.trim().eq_ignore_ascii_case("n_bar"));
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |msg: String| CliError::Malformed(format!("{} row {}: {msg}", path.display(), i + 2));
        let vals: Vec<f64> = row
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number"))))
            .collect::<Result<_>>()?;
        let arr: [f64; 5] = vals.try_into().expect("six columns checked");
        let tv = if inverted {
            TraitVector::new(arr)
        } else {
            label_transform(arr)
        }
        .map_err(|e| bad(e.to_string()))?;
        let id = row[0].trim().to_string();
        if out.insert(id.clone(), tv).is_some() {
            return Err(bad(format!("duplicate id `{id}`")));
        }
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, rows: &[(String, TraitVector<f64>)]) -> Result<()> {
    let mut text = String::from("video_id,o,c,e,a,n_bar\n");
    for (id, t) in rows {
        let [o, c, e, a, n] = t.to_array();
        text.push_str(&format!("{id},{o},{c},{e},{a},{n}\n"));
    }
    write_text(path, &text)
}
