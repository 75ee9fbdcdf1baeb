//! Correlation statistics for comparing models against ground truth.
//!
//! Two models are compared through the Fisher-transformed difference of
//! their prediction/ground-truth correlations:
//!
//! ```text
//! z'     = arctanh(rho)
//! SE     = sqrt(1/(n1 - 3) + 1/(n2 - 3))
//! z_obs  = (z'1 - z'2) / SE
//! p      = 1/2 * erfc(|z_obs| / sqrt(2))
//! ```
//!
//! The p-value is the one-tailed upper probability of `|z_obs|`. Written as
//! a standard normal CDF, `1/2 [1 + erf(z / sqrt(2))]`, it is that CDF
//! evaluated at `z = -|z_obs|`.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("input vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need more than 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("input is constant, correlation undefined")]
    ConstantInput,
    #[error("|rho| = {0} is at unity; Fisher transform undefined")]
    RhoAtUnity(f64),
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("invalid alpha {0}: must lie in (0, 1)")]
    InvalidAlpha(f64),
    #[error("number of models must be at least 1")]
    InvalidModelCount,
    #[error("invalid p-value {0}")]
    InvalidProbability(f64),
    #[error("trait value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("video `{0}` has no frames")]
    EmptyVideo(String),
    #[error("empty input")]
    EmptyInput,
    #[error("duplicate video id `{0}`")]
    DuplicateVideo(String),
    #[error("no ground truth for video `{0}`")]
    MissingGroundTruth(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Closest `rho` may get to ±1 before the Fisher transform is refused.
pub const UNITY_MARGIN: f64 = 1e-12;

/// Five apparent-trait scores in `[0, 1]`; neuroticism is stored inverted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraitVector<T> {
    pub o: T,
    pub c: T,
    pub e: T,
    pub a: T,
    pub n_bar: T,
}

impl<T: Scalar> TraitVector<T> {
    pub const NAMES: [&'static str; 5] = ["O", "C", "E", "A", "N_bar"];

    pub fn new(values: [T; 5]) -> Result<Self> {
        for v in values {
            if !v.is_finite() || v < T::zero() || v > T::one() {
                return Err(StatsError::OutOfRange(v.as_f64()));
            }
        }
        Ok(Self::from_array_unchecked(values))
    }

    pub(crate) fn from_array_unchecked([o, c, e, a, n_bar]: [T; 5]) -> Self {
        Self { o, c, e, a, n_bar }
    }

    /// Clamps each component into `[0, 1]`; NaN maps to 0.
    pub fn clamped(values: [T; 5]) -> Self {
        Self::from_array_unchecked(values.map(|v| {
            if v.is_nan() {
                T::zero()
            } else {
                v.max(T::zero()).min(T::one())
            }
        }))
    }

    pub fn splat(v: T) -> Result<Self> {
        Self::new([v; 5])
    }

    pub fn to_array(&self) -> [T; 5] {
        [self.o, self.c, self.e, self.a, self.n_bar]
    }

    pub fn mean(&self) -> T {
        self.to_array().into_iter().fold(T::zero(), |s, v| s + v) / T::lit(5.0)
    }
}

/// Converts raw `(O, C, E, A, N)` labels into a [`TraitVector`] with `N`
/// replaced by `1 - N`.
pub fn label_transform<T: Scalar>(raw: [T; 5]) -> Result<TraitVector<T>> {
    for v in raw {
        if !v.is_finite() || v < T::zero() || v > T::one() {
            return Err(StatsError::OutOfRange(v.as_f64()));
        }
    }
    let [o, c, e, a, n] = raw;
    TraitVector::new([o, c, e, a, T::one() - n])
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow<T> {
    pub video_id: String,
    pub predicted: TraitVector<T>,
    pub truth: TraitVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable<T> {
    rows: Vec<PredictionRow<T>>,
}

impl<T: Scalar> PredictionTable<T> {
    pub fn new(rows: Vec<PredictionRow<T>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.video_id.as_str()) {
                return Err(StatsError::DuplicateVideo(r.video_id.clone()));
            }
        }
        Ok(Self { rows })
    }

    /// Pairs every prediction with its ground truth by video id, in the
    /// order of `predictions`.
    pub fn join(
        predictions: &[(String, TraitVector<T>)],
        truth: &BTreeMap<String, TraitVector<T>>,
    ) -> Result<Self> {
        let rows = predictions
            .iter()
            .map(|(id, p)| {
                let t = truth
                    .get(id)
                    .ok_or_else(|| StatsError::MissingGroundTruth(id.clone()))?;
                Ok(PredictionRow {
                    video_id: id.clone(),
                    predicted: *p,
                    truth: *t,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    pub fn rows(&self) -> &[PredictionRow<T>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult<T> {
    pub rho: T,
    pub n: usize,
    /// `arctanh(rho)`; `None` when `rho` is within [`UNITY_MARGIN`] of ±1.
    pub z_prime: Option<T>,
}

impl<T: Scalar> CorrelationResult<T> {
    /// Wraps a stored correlation value, e.g. one read back from a report.
    pub fn from_rho(rho: T, n: usize) -> Result<Self> {
        if !rho.is_finite() {
            return Err(StatsError::NonFinite);
        }
        if rho.abs() > T::one() {
            return Err(StatsError::RhoAtUnity(rho.as_f64()));
        }
        Ok(Self {
            rho,
            n,
            z_prime: fisher_z(rho).ok(),
        })
    }
}

/// Pearson correlation with population moments.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<CorrelationResult<T>> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n <= 3 {
        return Err(StatsError::TooFewSamples(n));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nf = T::count(n);
    let mx = x.iter().fold(T::zero(), |s, &v| s + v) / nf;
    let my = y.iter().fold(T::zero(), |s, &v| s + v) / nf;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(StatsError::ConstantInput);
    }
    let cov = sxy / nf;
    let rho = cov / ((sxx / nf).sqrt() * (syy / nf).sqrt());
    let rho = rho.max(-T::one()).min(T::one());
    CorrelationResult::from_rho(rho, n)
}

/// `arctanh(rho)`, refusing inputs within [`UNITY_MARGIN`] of ±1.
pub fn fisher_z<T: Scalar>(rho: T) -> Result<T> {
    if !rho.is_finite() {
        return Err(StatsError::NonFinite);
    }
    if rho.abs() >= T::one() - T::lit(UNITY_MARGIN) {
        return Err(StatsError::RhoAtUnity(rho.as_f64()));
    }
    Ok(rho.atanh())
}

/// Standard error of the difference of two Fisher-transformed correlations.
pub fn fisher_standard_error<T: Scalar>(n1: usize, n2: usize) -> Result<T> {
    for n in [n1, n2] {
        if n <= 3 {
            return Err(StatsError::TooFewSamples(n));
        }
    }
    Ok((T::one() / T::count(n1 - 3) + T::one() / T::count(n2 - 3)).sqrt())
}

/// One-tailed upper normal probability of `|z|`, `1/2 erfc(|z| / sqrt 2)`.
pub fn p_from_z<T: Scalar>(z: T) -> T {
    let p = 0.5 * libm::erfc(z.as_f64().abs() / std::f64::consts::SQRT_2);
    T::lit(p)
}

/// Outcome of comparing two correlations, before any significance level is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison<T> {
    pub z_obs: T,
    pub p: T,
    pub standard_error: T,
}

impl<T: Scalar> Comparison<T> {
    pub fn judge(&self, alpha: T, num_models: usize) -> Result<ComparisonResult<T>> {
        let s = significance(self.p, alpha, num_models)?;
        Ok(ComparisonResult {
            z_obs: self.z_obs,
            p: self.p,
            alpha_corrected: s.alpha_corrected,
            significant: s.significant,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonResult<T> {
    pub z_obs: T,
    pub p: T,
    pub alpha_corrected: T,
    pub significant: bool,
}

pub fn compare_correlations<T: Scalar>(
    r1: &CorrelationResult<T>,
    r2: &CorrelationResult<T>,
) -> Result<Comparison<T>> {
    let se = fisher_standard_error::<T>(r1.n, r2.n)?;
    let z_obs = (fisher_z(r1.rho)? - fisher_z(r2.rho)?) / se;
    Ok(Comparison {
        z_obs,
        p: p_from_z(z_obs),
        standard_error: se,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Significance<T> {
    pub alpha_corrected: T,
    pub significant: bool,
}

/// Bonferroni-corrected decision: significant iff `p < alpha / num_models`.
pub fn significance<T: Scalar>(p: T, alpha: T, num_models: usize) -> Result<Significance<T>> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(StatsError::InvalidAlpha(alpha.as_f64()));
    }
    if num_models == 0 {
        return Err(StatsError::InvalidModelCount);
    }
    if !(p >= T::zero() && p <= T::lit(0.5)) {
        return Err(StatsError::InvalidProbability(p.as_f64()));
    }
    let alpha_corrected = alpha / T::count(num_models);
    Ok(Significance {
        alpha_corrected,
        significant: p < alpha_corrected,
    })
}

/// Mean absolute error over all rows and the five traits.
pub fn mae<T: Scalar>(pred: &[TraitVector<T>], truth: &[TraitVector<T>]) -> Result<T> {
    if pred.len() != truth.len() {
        return Err(StatsError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut sum = T::zero();
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.to_array().into_iter().zip(t.to_array()) {
            sum = sum + (a - b).abs();
        }
    }
    Ok(sum / T::count(pred.len() * 5))
}

/// Per-trait arithmetic mean of one video's frame predictions.
pub fn mean_prediction<T: Scalar>(video_id: &str, frames: &[TraitVector<T>]) -> Result<TraitVector<T>> {
    if frames.is_empty() {
        return Err(StatsError::EmptyVideo(video_id.to_string()));
    }
    let mut acc = [T::zero(); 5];
    for f in frames {
        for (s, v) in acc.iter_mut().zip(f.to_array()) {
            *s = *s + v;
        }
    }
    let n = T::count(frames.len());
    Ok(TraitVector::clamped(acc.map(|s| s / n)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction<T> {
    pub video_id: String,
    pub frame_index: u32,
    pub prediction: TraitVector<T>,
}

/// Averages frame-level predictions per video. Videos come out sorted by id;
/// frames are summed in frame-index order.
pub fn aggregate_predictions<T: Scalar>(
    frame_preds: &[FramePrediction<T>],
) -> Result<Vec<(String, TraitVector<T>)>> {
    if frame_preds.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut by_video: BTreeMap<&str, Vec<(u32, TraitVector<T>)>> = BTreeMap::new();
    for f in frame_preds {
        by_video
            .entry(f.video_id.as_str())
            .or_default()
            .push((f.frame_index, f.prediction));
    }
    by_video
        .into_iter()
        .map(|(id, mut frames)| {
            frames.sort_by_key(|(i, _)| *i);
            let preds: Vec<_> = frames.into_iter().map(|(_, p)| p).collect();
            Ok((id.to_string(), mean_prediction(id, &preds)?))
        })
        .collect()
}

/// Correlation between the across-trait mean prediction and the across-trait
/// mean ground truth, one pair per video.
pub fn mean_trait_correlation<T: Scalar>(table: &PredictionTable<T>) -> Result<CorrelationResult<T>> {
    let (x, y): (Vec<T>, Vec<T>) = table
        .rows()
        .iter()
        .map(|r| (r.predicted.mean(), r.truth.mean()))
        .unzip();
    pearson(&x, &y)
}

/// Pearson correlation for each trait separately, in O, C, E, A, N_bar order.
pub fn per_trait_correlation<T: Scalar>(
    table: &PredictionTable<T>,
) -> [Result<CorrelationResult<T>>; 5] {
    std::array::from_fn(|k| {
        let (x, y): (Vec<T>, Vec<T>) = table
            .rows()
            .iter()
            .map(|r| (r.predicted.to_array()[k], r.truth.to_array()[k]))
            .unzip();
        pearson(&x, &y)
    })
}
