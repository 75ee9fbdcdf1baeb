//! Clip identities, grouped dataset splits and cross-split contamination.
//!
//! Clips are named `<video>.<segment>.<ext>`; every clip cut from the same
//! source video shares a UID. Splits are built over UIDs, never over clips,
//! so no source video can appear on both sides of a partition.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("malformed clip name `{0}`")]
    MalformedClipName(String),
    #[error("invalid clip-name pattern: {0}")]
    InvalidPattern(String),
    #[error("duplicate clip (uid `{uid}`, segment {segment})")]
    DuplicateClip { uid: String, segment: u32 },
    #[error("quotas sum to {quota_sum} but the corpus has {uid_count} distinct UIDs")]
    QuotaMismatch { quota_sum: usize, uid_count: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("unknown split name `{0}`")]
    UnknownSplit(String),
    #[error("malformed split manifest line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// One clip and the source video it was cut from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClipRef {
    pub clip_id: String,
    pub uid: String,
    pub segment: u32,
}

/// Rule that extracts the UID and segment number from a clip file name.
///
/// The regex must define named groups `uid` and `segment`; the `uid` match
/// must start at the beginning of the name.
#[derive(Debug, Clone)]
pub struct ClipNamePattern {
    re: Regex,
}

impl ClipNamePattern {
    pub fn new(pattern: &str) -> Result<Self> {
        let re = Regex::new(pattern).map_err(|e| CorpusError::InvalidPattern(e.to_string()))?;
        let names: HashSet<&str> = re.capture_names().flatten().collect();
        if !names.contains("uid") || !names.contains("segment") {
            return Err(CorpusError::InvalidPattern(
                "pattern needs named groups `uid` and `segment`".into(),
            ));
        }
        Ok(Self { re })
    }
}

impl Default for ClipNamePattern {
    /// Strips the trailing `.<digits>.<ext>`; everything before it is the UID.
    fn default() -> Self {
        Self::new(r"^(?P<uid>.+)\.(?P<segment>[0-9]+)\.(?P<ext>[^./]+)$").expect("static pattern")
    }
}

pub fn parse_clip_id(filename: &str, pattern: &ClipNamePattern) -> Result<ClipRef> {
    let malformed = || CorpusError::MalformedClipName(filename.to_string());
    let caps = pattern.re.captures(filename).ok_or_else(malformed)?;
    let uid = caps.name("uid").ok_or_else(malformed)?;
    let segment = caps.name("segment").ok_or_else(malformed)?;
    if uid.start() != 0 || uid.as_str().is_empty() {
        return Err(malformed());
    }
    let segment = segment.as_str().parse::<u32>().map_err(|_| malformed())?;
    Ok(ClipRef {
        clip_id: filename.to_string(),
        uid: uid.as_str().to_string(),
        segment,
    })
}

/// Parses a corpus manifest (one clip file name per line) and rejects
/// duplicate `(uid, segment)` pairs.
pub fn parse_corpus_manifest(text: &str, pattern: &ClipNamePattern) -> Result<Vec<ClipRef>> {
    let clips = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| parse_clip_id(l, pattern))
        .collect::<Result<Vec<_>>>()?;
    ensure_unique(&clips)?;
    Ok(clips)
}

fn ensure_unique(clips: &[ClipRef]) -> Result<()> {
    let mut seen = HashSet::with_capacity(clips.len());
    for c in clips {
        if !seen.insert((c.uid.as_str(), c.segment)) {
            return Err(CorpusError::DuplicateClip {
                uid: c.uid.clone(),
                segment: c.segment,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Training,
    Testing,
    Validation,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Training, Split::Testing, Split::Validation];

    pub fn name(self) -> &'static str {
        match self {
            Split::Training => "training",
            Split::Testing => "testing",
            Split::Validation => "validation",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" | "train" => Ok(Split::Training),
            "testing" | "test" => Ok(Split::Testing),
            "validation" | "val" => Ok(Split::Validation),
            other => Err(CorpusError::UnknownSplit(other.to_string())),
        }
    }
}

/// Number of UIDs assigned to each split, in training/testing/validation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitQuota {
    pub train: usize,
    pub test: usize,
    pub validation: usize,
}

impl SplitQuota {
    pub fn new(train: usize, test: usize, validation: usize) -> Self {
        Self {
            train,
            test,
            validation,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.test + self.validation
    }
}

impl FromStr for SplitQuota {
    type Err = String;

    /// Parses `train,test,validation`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad quota `{p}`: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        match parts.as_slice() {
            [a, b, c] => Ok(Self::new(*a, *b, *c)),
            _ => Err(format!("expected three comma-separated quotas, got `{s}`")),
        }
    }
}

/// A partition of a corpus into training, testing and validation clips.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitManifest {
    pub splits: BTreeMap<Split, Vec<ClipRef>>,
    pub uid_counts: BTreeMap<Split, usize>,
}

impl SplitManifest {
    /// Builds a manifest from explicit clip assignments. No disjointness check
    /// is made here; see [`verify_disjoint`].
    pub fn from_assignments<I>(assignments: I) -> Self
    where
        I: IntoIterator<Item = (ClipRef, Split)>,
    {
        let mut splits: BTreeMap<Split, Vec<ClipRef>> =
            Split::ALL.iter().map(|s| (*s, Vec::new())).collect();
        for (clip, split) in assignments {
            splits.entry(split).or_default().push(clip);
        }
        for clips in splits.values_mut() {
            clips.sort_by(|a, b| (&a.uid, a.segment, &a.clip_id).cmp(&(&b.uid, b.segment, &b.clip_id)));
        }
        let uid_counts = splits
            .iter()
            .map(|(s, clips)| (*s, clips.iter().map(|c| c.uid.as_str()).collect::<BTreeSet<_>>().len()))
            .collect();
        Self { splits, uid_counts }
    }

    pub fn clips(&self, split: Split) -> &[ClipRef] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn uid_count(&self, split: Split) -> usize {
        self.uid_counts.get(&split).copied().unwrap_or(0)
    }

    pub fn total_clips(&self) -> usize {
        self.splits.values().map(Vec::len).sum()
    }

    /// Clips per source video (the "vid/UID" column); `None` for an empty split.
    pub fn clips_per_uid(&self, split: Split) -> Option<f64> {
        let uids = self.uid_count(split);
        (uids > 0).then(|| self.clips(split).len() as f64 / uids as f64)
    }

    pub fn uids(&self, split: Split) -> BTreeSet<&str> {
        self.clips(split).iter().map(|c| c.uid.as_str()).collect()
    }

    pub fn split_of(&self, clip_id: &str) -> Option<Split> {
        self.splits
            .iter()
            .find(|(_, clips)| clips.iter().any(|c| c.clip_id == clip_id))
            .map(|(s, _)| *s)
    }

    /// Delimited text with columns `clip_id,uid,segment,split`, header first.
    pub fn to_delimited(&self, only: Option<Split>) -> String {
        let mut out = String::from("clip_id,uid,segment,split\n");
        for (split, clips) in &self.splits {
            if only.is_some_and(|o| o != *split) {
                continue;
            }
            for c in clips {
                out.push_str(&format!("{},{},{},{}\n", c.clip_id, c.uid, c.segment, split));
            }
        }
        out
    }

    /// Parses one or more texts produced by [`SplitManifest::to_delimited`].
    pub fn from_delimited<'a, I>(texts: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut assignments = Vec::new();
        for text in texts {
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || (i == 0 && line.starts_with("clip_id")) {
                    continue;
                }
                let bad = |reason: &str| CorpusError::MalformedManifest {
                    line: i + 1,
                    reason: reason.to_string(),
                };
                let fields: Vec<&str> = line.split(',').collect();
                let [clip_id, uid, segment, split] = fields.as_slice() else {
                    return Err(bad("expected 4 columns"));
                };
                if uid.is_empty() || !clip_id.starts_with(uid) {
                    return Err(bad("uid must be a non-empty prefix of clip_id"));
                }
                let segment = segment.parse::<u32>().map_err(|_| bad("segment is not an integer"))?;
                assignments.push((
                    ClipRef {
                        clip_id: clip_id.to_string(),
                        uid: uid.to_string(),
                        segment,
                    },
                    split.parse::<Split>()?,
                ));
            }
        }
        ensure_unique(&assignments.iter().map(|(c, _)| c.clone()).collect::<Vec<_>>())?;
        Ok(Self::from_assignments(assignments))
    }
}

/// Assigns whole source videos to splits: UIDs are sorted bytewise and taken
/// sequentially, `train` first, then `test`, then `validation`.
pub fn build_splits(clips: &[ClipRef], quota: SplitQuota) -> Result<SplitManifest> {
    ensure_unique(clips)?;
    let uids: BTreeSet<&str> = clips.iter().map(|c| c.uid.as_str()).collect();
    if quota.total() != uids.len() {
        return Err(CorpusError::QuotaMismatch {
            quota_sum: quota.total(),
            uid_count: uids.len(),
        });
    }
    let assignment: BTreeMap<&str, Split> = uids
        .into_iter()
        .enumerate()
        .map(|(i, uid)| {
            let split = if i < quota.train {
                Split::Training
            } else if i < quota.train + quota.test {
                Split::Testing
            } else {
                Split::Validation
            };
            (uid, split)
        })
        .collect();
    Ok(SplitManifest::from_assignments(
        clips.iter().map(|c| (c.clone(), assignment[c.uid.as_str()])),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DisjointVerdict {
    Pass,
    Fail { shared_uids: Vec<String> },
}

impl DisjointVerdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, DisjointVerdict::Pass)
    }
}

/// Passes iff no UID occurs in more than one split.
pub fn verify_disjoint(manifest: &SplitManifest) -> DisjointVerdict {
    let mut shared = BTreeSet::new();
    for (i, a) in Split::ALL.iter().enumerate() {
        let ua = manifest.uids(*a);
        for b in &Split::ALL[i + 1..] {
            shared.extend(manifest.uids(*b).intersection(&ua).map(|s| s.to_string()));
        }
    }
    if shared.is_empty() {
        DisjointVerdict::Pass
    } else {
        DisjointVerdict::Fail {
            shared_uids: shared.into_iter().collect(),
        }
    }
}

/// UIDs present in both clip lists, sorted.
pub fn shared_uids(a: &[ClipRef], b: &[ClipRef]) -> Vec<String> {
    let ua: BTreeSet<&str> = a.iter().map(|c| c.uid.as_str()).collect();
    let ub: BTreeSet<&str> = b.iter().map(|c| c.uid.as_str()).collect();
    ua.intersection(&ub).map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    /// Fraction of test clips whose UID also appears in train.
    pub test_contaminated_fraction: f64,
    /// Fraction of train clips whose UID also appears in test.
    pub train_contaminated_fraction: f64,
    pub test_contaminated: usize,
    pub train_contaminated: usize,
    pub shared_uids: Vec<String>,
}

pub fn overlap_stats(train: &[ClipRef], test: &[ClipRef]) -> Result<OverlapReport> {
    if train.is_empty() {
        return Err(CorpusError::EmptySplit("training"));
    }
    if test.is_empty() {
        return Err(CorpusError::EmptySplit("testing"));
    }
    let shared = shared_uids(train, test);
    let set: BTreeSet<&str> = shared.iter().map(String::as_str).collect();
    let count = |clips: &[ClipRef]| clips.iter().filter(|c| set.contains(c.uid.as_str())).count();
    let (train_hit, test_hit) = (count(train), count(test));
    Ok(OverlapReport {
        test_contaminated_fraction: test_hit as f64 / test.len() as f64,
        train_contaminated_fraction: train_hit as f64 / train.len() as f64,
        test_contaminated: test_hit,
        train_contaminated: train_hit,
        shared_uids: shared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(uid: &str, segment: u32) -> ClipRef {
        ClipRef {
            clip_id: format!("{uid}.{segment:03}.mp4"),
            uid: uid.to_string(),
            segment,
        }
    }

    #[test]
    fn parses_clip_names() {
        let p = ClipNamePattern::default();
        let c = parse_clip_id("Gx72a.003.mp4", &p).unwrap();
        assert_eq!((c.uid.as_str(), c.segment), ("Gx72a", 3));
        assert_eq!(c.clip_id, "Gx72a.003.mp4");
        let c = parse_clip_id("a.000.mp4", &p).unwrap();
        assert_eq!((c.uid.as_str(), c.segment), ("a", 0));
        assert_eq!(
            parse_clip_id("noextension", &p),
            Err(CorpusError::MalformedClipName("noextension".into()))
        );
    }

    #[test]
    fn uid_keeps_inner_dots() {
        let c = parse_clip_id("-6otZ7M-Mro.v2.005.mp4", &ClipNamePattern::default()).unwrap();
        assert_eq!(c.uid, "-6otZ7M-Mro.v2");
        assert_eq!(c.segment, 5);
        assert!(parse_clip_id(".003.mp4", &ClipNamePattern::default()).is_err());
    }

    #[test]
    fn custom_pattern_requires_groups() {
        assert!(matches!(
            ClipNamePattern::new(r"^(?P<uid>\w+)$"),
            Err(CorpusError::InvalidPattern(_))
        ));
        let p = ClipNamePattern::new(r"^(?P<uid>[a-z]+)_(?P<segment>\d+)$").unwrap();
        let c = parse_clip_id("abc_12", &p).unwrap();
        assert_eq!((c.uid.as_str(), c.segment), ("abc", 12));
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let text = "a.001.mp4\n\nb.001.mp4\na.001.avi\n";
        assert_eq!(
            parse_corpus_manifest(text, &ClipNamePattern::default()),
            Err(CorpusError::DuplicateClip {
                uid: "a".into(),
                segment: 1
            })
        );
    }

    #[test]
    fn alphabetical_split_assignment() {
        let clips = vec![clip("b", 0), clip("a", 1), clip("c", 0), clip("a", 0)];
        let m = build_splits(&clips, SplitQuota::new(1, 1, 1)).unwrap();
        assert_eq!(m.clips(Split::Training), &[clip("a", 0), clip("a", 1)]);
        assert_eq!(m.clips(Split::Testing), &[clip("b", 0)]);
        assert_eq!(m.clips(Split::Validation), &[clip("c", 0)]);
        assert!(verify_disjoint(&m).is_pass());
    }

    #[test]
    fn bytewise_order_puts_uppercase_first() {
        let clips = vec![clip("a", 0), clip("B", 0)];
        let m = build_splits(&clips, SplitQuota::new(1, 1, 0)).unwrap();
        assert_eq!(m.clips(Split::Training)[0].uid, "B");
    }

    #[test]
    fn quota_mismatch() {
        let clips = vec![clip("a", 0), clip("b", 0)];
        assert_eq!(
            build_splits(&clips, SplitQuota::new(1, 1, 1)),
            Err(CorpusError::QuotaMismatch {
                quota_sum: 3,
                uid_count: 2
            })
        );
    }

    #[test]
    fn planted_violation_is_reported() {
        let m = SplitManifest::from_assignments(vec![
            (clip("x", 0), Split::Training),
            (clip("y", 0), Split::Training),
            (clip("x", 1), Split::Testing),
        ]);
        assert_eq!(
            verify_disjoint(&m),
            DisjointVerdict::Fail {
                shared_uids: vec!["x".into()]
            }
        );
    }

    #[test]
    fn empty_testing_split_passes() {
        let m = SplitManifest::from_assignments(vec![(clip("x", 0), Split::Training)]);
        assert!(verify_disjoint(&m).is_pass());
    }

    #[test]
    fn overlap_edge_cases() {
        let a = vec![clip("a", 0), clip("a", 1)];
        let b = vec![clip("b", 0)];
        let r = overlap_stats(&a, &b).unwrap();
        assert_eq!((r.test_contaminated_fraction, r.train_contaminated_fraction), (0.0, 0.0));
        let r = overlap_stats(&a, &[clip("a", 7)]).unwrap();
        assert_eq!((r.test_contaminated_fraction, r.train_contaminated_fraction), (1.0, 1.0));
        assert_eq!(overlap_stats(&[], &b), Err(CorpusError::EmptySplit("training")));
        assert_eq!(overlap_stats(&a, &[]), Err(CorpusError::EmptySplit("testing")));
    }

    #[test]
    fn delimited_round_trip() {
        let clips = vec![clip("b", 0), clip("a", 1), clip("c", 0), clip("a", 0)];
        let m = build_splits(&clips, SplitQuota::new(1, 1, 1)).unwrap();
        let text = m.to_delimited(None);
        assert!(text.starts_with("clip_id,uid,segment,split\na.000.mp4,a,0,training\n"));
        assert_eq!(SplitManifest::from_delimited([text.as_str()]).unwrap(), m);
        let per_split: Vec<String> = Split::ALL.iter().map(|s| m.to_delimited(Some(*s))).collect();
        assert_eq!(
            SplitManifest::from_delimited(per_split.iter().map(String::as_str)).unwrap(),
            m
        );
    }

    #[test]
    fn quota_parsing() {
        assert_eq!("2060,500,500".parse::<SplitQuota>(), Ok(SplitQuota::new(2060, 500, 500)));
        assert!("1,2".parse::<SplitQuota>().is_err());
        assert!("1,x,2".parse::<SplitQuota>().is_err());
    }
}
