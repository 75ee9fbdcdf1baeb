use sha2::{Digest, Sha256};

use super::{Result, TrainError};
use crate::imageops::FrameImage;
use crate::stats::TraitVector;
use crate::Scalar;

pub const NUM_TRAITS: usize = 5;

/// Fixed image-to-vector map: grayscale, then block-average onto a
/// `grid` x `grid` lattice, scaled into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureExtractor {
    pub grid: usize,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self { grid: 8 }
    }
}

impl FeatureExtractor {
    pub fn feature_dim(&self) -> usize {
        self.grid * self.grid
    }

    pub fn extract<T: Scalar>(&self, image: &FrameImage) -> Vec<T> {
        let g = self.grid;
        let (w, h) = (image.width(), image.height());
        let mut sums = vec![0u64; g * g];
        let mut counts = vec![0u64; g * g];
        for y in 0..h {
            let cy = y * g / h;
            for x in 0..w {
                let cell = cy * g + x * g / w;
                let [r, gr, b] = image.pixel(x, y);
                sums[cell] += r as u64 + gr as u64 + b as u64;
                counts[cell] += 1;
            }
        }
        sums.iter()
            .zip(&counts)
            .map(|(&s, &c)| {
                if c == 0 {
                    T::zero()
                } else {
                    T::from_u64(s).expect("finite") / T::from_u64(c * 765).expect("finite")
                }
            })
            .collect()
    }
}

/// Linear map from a feature vector to the five trait scores.
///
/// Weights are stored row-major, `weights[j * 5 + k]` connecting feature `j`
/// to trait `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor<T> {
    feature_dim: usize,
    weights: Vec<T>,
    bias: [T; NUM_TRAITS],
}

impl<T: Scalar> Regressor<T> {
    pub fn zeros(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            weights: vec![T::zero(); feature_dim * NUM_TRAITS],
            bias: [T::zero(); NUM_TRAITS],
        }
    }

    pub fn from_parts(feature_dim: usize, weights: Vec<T>, bias: [T; NUM_TRAITS]) -> Result<Self> {
        if weights.len() != feature_dim * NUM_TRAITS {
            return Err(TrainError::FeatureDim {
                expected: feature_dim * NUM_TRAITS,
                got: weights.len(),
            });
        }
        Ok(Self {
            feature_dim,
            weights,
            bias,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weight(&self, feature: usize, trait_idx: usize) -> T {
        self.weights[feature * NUM_TRAITS + trait_idx]
    }

    pub fn bias(&self) -> [T; NUM_TRAITS] {
        self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + NUM_TRAITS
    }

    /// Weights followed by bias.
    pub fn params(&self) -> Vec<T> {
        self.weights.iter().chain(self.bias.iter()).copied().collect()
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(TrainError::FeatureDim {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        for (p, &v) in self.params_mut().zip(params) {
            *p = v;
        }
        Ok(())
    }

    fn check_dim(&self, features: &[T]) -> Result<()> {
        if features.len() != self.feature_dim {
            return Err(TrainError::FeatureDim {
                expected: self.feature_dim,
                got: features.len(),
            });
        }
        Ok(())
    }

    /// Unclamped output; training operates on this.
    pub fn forward(&self, features: &[T]) -> [T; NUM_TRAITS] {
        let mut out = self.bias;
        for (j, &x) in features.iter().enumerate().take(self.feature_dim) {
            let row = &self.weights[j * NUM_TRAITS..(j + 1) * NUM_TRAITS];
            for (o, &w) in out.iter_mut().zip(row) {
                *o = *o + w * x;
            }
        }
        out
    }

    /// Inference output, clamped into `[0, 1]`.
    pub fn predict(&self, features: &[T]) -> TraitVector<T> {
        TraitVector::clamped(self.forward(features))
    }

    /// Little-endian parameter bytes, weights then bias.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.params().into_iter().flat_map(Scalar::le_bytes).collect()
    }

    /// SHA-256 of [`Regressor::to_bytes`], hex encoded.
    pub fn fingerprint(&self) -> String {
        hex_digest(&self.to_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// One training example: features of a single frame and its clip's labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub features: Vec<T>,
    pub target: TraitVector<T>,
}

/// Momentum buffer, laid out like [`Regressor::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity<T>(pub Vec<T>);

impl<T: Scalar> Velocity<T> {
    pub fn zeros_like(model: &Regressor<T>) -> Self {
        Self(vec![T::zero(); model.param_count()])
    }
}

/// Batch-mean absolute error over the five traits, on unclamped outputs.
pub fn batch_loss<T: Scalar>(model: &Regressor<T>, batch: &[Sample<T>]) -> Result<T> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut sum = T::zero();
    for s in batch {
        model.check_dim(&s.features)?;
        for (y, t) in model.forward(&s.features).into_iter().zip(s.target.to_array()) {
            sum = sum + (y - t).abs();
        }
    }
    Ok(sum / T::count(batch.len() * NUM_TRAITS))
}

/// Gradient of [`batch_loss`], laid out like [`Regressor::params`]. The
/// subgradient of `|r|` at `r = 0` is taken as 0.
pub fn gradient<T: Scalar>(model: &Regressor<T>, batch: &[Sample<T>]) -> Result<Vec<T>> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let d = model.feature_dim;
    let mut grad = vec![T::zero(); model.param_count()];
    let scale = T::one() / T::count(batch.len() * NUM_TRAITS);
    for s in batch {
        model.check_dim(&s.features)?;
        let out = model.forward(&s.features);
        let target = s.target.to_array();
        let g: [T; NUM_TRAITS] = std::array::from_fn(|k| {
            let r = out[k] - target[k];
            if r > T::zero() {
                scale
            } else if r < T::zero() {
                -scale
            } else {
                T::zero()
            }
        });
        for (j, &x) in s.features.iter().enumerate() {
            for k in 0..NUM_TRAITS {
                grad[j * NUM_TRAITS + k] = grad[j * NUM_TRAITS + k] + g[k] * x;
            }
        }
        for k in 0..NUM_TRAITS {
            grad[d * NUM_TRAITS + k] = grad[d * NUM_TRAITS + k] + g[k];
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient);
    }
    Ok(grad)
}

/// One SGD step with classical momentum:
/// `v <- momentum * v + grad`, `params <- params - lr * v`.
/// Returns the batch loss before the update.
pub fn sgd_step<T: Scalar>(
    model: &mut Regressor<T>,
    batch: &[Sample<T>],
    lr: T,
    momentum: T,
    velocity: &mut Velocity<T>,
) -> Result<T> {
    let loss = batch_loss(model, batch)?;
    let grad = gradient(model, batch)?;
    if velocity.0.len() != grad.len() {
        return Err(TrainError::FeatureDim {
            expected: grad.len(),
            got: velocity.0.len(),
        });
    }
    for ((p, v), g) in model.params_mut().zip(velocity.0.iter_mut()).zip(grad) {
        *v = momentum * *v + g;
        *p = *p - lr * *v;
    }
    Ok(loss)
}

/// Anything that maps one frame's input to a clamped trait prediction.
pub trait Predictor<T: Scalar> {
    type Input;

    fn predict_frame(&self, input: &Self::Input) -> TraitVector<T>;
}

impl<T: Scalar> Predictor<T> for Regressor<T> {
    type Input = Vec<T>;

    fn predict_frame(&self, input: &Vec<T>) -> TraitVector<T> {
        self.predict(input)
    }
}

/// Two frozen branches whose raw outputs are concatenated (10 values) and
/// mapped to the five traits by a trainable linear fusion layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel<T> {
    pub face_branch: Regressor<T>,
    pub bg_branch: Regressor<T>,
    pub fusion: Regressor<T>,
}

impl<T: Scalar> FusionModel<T> {
    /// Fusion layer starts as the average of the two branches.
    pub fn new(face_branch: Regressor<T>, bg_branch: Regressor<T>) -> Self {
        let half = T::lit(0.5);
        let mut weights = vec![T::zero(); 2 * NUM_TRAITS * NUM_TRAITS];
        for k in 0..NUM_TRAITS {
            weights[k * NUM_TRAITS + k] = half;
            weights[(NUM_TRAITS + k) * NUM_TRAITS + k] = half;
        }
        let fusion = Regressor::from_parts(2 * NUM_TRAITS, weights, [T::zero(); NUM_TRAITS])
            .expect("fusion layer shape");
        Self {
            face_branch,
            bg_branch,
            fusion,
        }
    }

    /// Concatenated raw branch outputs, the fusion layer's input.
    pub fn branch_outputs(&self, face: &[T], bg: &[T]) -> Vec<T> {
        let mut z = self.face_branch.forward(face).to_vec();
        z.extend(self.bg_branch.forward(bg));
        z
    }

    pub fn forward(&self, face: &[T], bg: &[T]) -> [T; NUM_TRAITS] {
        self.fusion.forward(&self.branch_outputs(face, bg))
    }

    pub fn predict(&self, face: &[T], bg: &[T]) -> TraitVector<T> {
        TraitVector::clamped(self.forward(face, bg))
    }

    /// Magnitudes `(Σ_k |face part_k|, Σ_k |bg part_k|)` of the two branches'
    /// contributions to the fused output for one frame (bias excluded).
    pub fn contributions(&self, face: &[T], bg: &[T]) -> (T, T) {
        let z = self.branch_outputs(face, bg);
        let part = |range: std::ops::Range<usize>| {
            (0..NUM_TRAITS)
                .map(|k| {
                    range
                        .clone()
                        .fold(T::zero(), |s, j| s + self.fusion.weight(j, k) * z[j])
                        .abs()
                })
                .fold(T::zero(), |s, v| s + v)
        };
        (part(0..NUM_TRAITS), part(NUM_TRAITS..2 * NUM_TRAITS))
    }

    /// Parameter bytes of both frozen branches.
    pub fn branch_bytes(&self) -> Vec<u8> {
        let mut b = self.face_branch.to_bytes();
        b.extend(self.bg_branch.to_bytes());
        b
    }
}

impl<T: Scalar> Predictor<T> for FusionModel<T> {
    type Input = (Vec<T>, Vec<T>);

    fn predict_frame(&self, (face, bg): &(Vec<T>, Vec<T>)) -> TraitVector<T> {
        self.predict(face, bg)
    }
}
