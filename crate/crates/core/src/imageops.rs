//! Region-conditioned frame preprocessing.
//!
//! Produces the face, background and entire-frame inputs from an RGB frame
//! and its 68-point facial landmarks, and measures how homogeneous a set of
//! images is via the spread around its mean image.
//!
//! Pixel centres sit on integer coordinates: pixel `(x, y)` is sampled at
//! exactly `(x, y)`.

use thiserror::Error;

use crate::Scalar;

/// Points per landmark set (iBUG 68-point annotation).
pub const NUM_LANDMARKS: usize = 68;
/// Side of the square face and background condition images.
pub const CONDITION_SIZE: usize = 256;
pub const ENTIRE_FRAME_WIDTH: usize = 465;
pub const ENTIRE_FRAME_HEIGHT: usize = 256;

/// Tolerance for treating a sample coordinate just past the border as on it.
const EDGE_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("image dimensions must be non-zero")]
    EmptyImage,
    #[error("expected {NUM_LANDMARKS} landmarks, got {0}")]
    LandmarkCount(usize),
    #[error("landmark coordinates must be finite")]
    NonFiniteLandmark,
    #[error("source points are degenerate (coincident or collapsed)")]
    DegenerateConfiguration,
    #[error("frame {width}x{height} is smaller than {CONDITION_SIZE}x{CONDITION_SIZE}")]
    FrameTooSmall { width: usize, height: usize },
    #[error("images differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid bounding box ({left},{top})-({right},{bottom})")]
    InvalidBox {
        left: i64,
        top: i64,
        right: i64,
        bottom: i64,
    },
}

pub type Result<T> = std::result::Result<T, ImageError>;

/// 8-bit RGB raster, row-major, channels interleaved R, G, B.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl FrameImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage);
        }
        let expected = width * height * 3;
        if pixels.len() != expected {
            return Err(ImageError::BufferSize {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, pixels)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies the `width` x `height` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(ImageError::FrameTooSmall {
                width: self.width,
                height: self.height,
            });
        }
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * 3;
            pixels.extend_from_slice(&self.pixels[start..start + width * 3]);
        }
        Self::new(width, height, pixels)
    }

    /// Bilinear sample at a real coordinate. `None` outside the pixel-centre hull.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        let (maxx, maxy) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(x >= -EDGE_EPS && x <= maxx + EDGE_EPS && y >= -EDGE_EPS && y <= maxy + EDGE_EPS) {
            return None;
        }
        let (x, y) = (x.clamp(0.0, maxx), y.clamp(0.0, maxy));
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let (p00, p10, p01, p11) = (
            self.pixel(x0, y0),
            self.pixel(x1, y0),
            self.pixel(x0, y1),
            self.pixel(x1, y1),
        );
        Some(std::array::from_fn(|c| {
            let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
            let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
            top * (1.0 - fy) + bottom * fy
        }))
    }
}

/// Rounds half away from zero and saturates to `0..=255`.
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }
}

/// The 68 facial landmarks of one frame, in pixel units.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet<T> {
    points: Vec<Point<T>>,
}

impl<T: Scalar> LandmarkSet<T> {
    pub fn new(points: Vec<Point<T>>) -> Result<Self> {
        if points.len() != NUM_LANDMARKS {
            return Err(ImageError::LandmarkCount(points.len()));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(ImageError::NonFiniteLandmark);
        }
        Ok(Self { points })
    }

    /// Builds from a flat `x0, y0, x1, y1, ...` sequence.
    pub fn from_flat(coords: &[T]) -> Result<Self> {
        if !coords.len().is_multiple_of(2) {
            return Err(ImageError::LandmarkCount(coords.len() / 2));
        }
        Self::new(coords.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect())
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn map(&self, f: impl Fn(Point<T>) -> Point<T>) -> Self {
        Self {
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn transformed(&self, t: &SimilarityTransform<T>) -> Self {
        self.map(|p| t.apply(p))
    }

    /// Each point clamped into `[0, width-1] x [0, height-1]`.
    pub fn clamped_to(&self, width: usize, height: usize) -> Self {
        let (mx, my) = (T::count(width - 1), T::count(height - 1));
        self.map(|p| Point::new(p.x.max(T::zero()).min(mx), p.y.max(T::zero()).min(my)))
    }

    /// Rescales and centres the set inside a `size` x `size` canvas so its
    /// larger extent spans `(1 - 2 * margin) * size`. This places a template
    /// in the face-condition output coordinate frame.
    pub fn fit_to_canvas(&self, size: usize, margin: T) -> Result<Self> {
        let (mut lo, mut hi) = (self.points[0], self.points[0]);
        for p in &self.points {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let extent = (hi.x - lo.x).max(hi.y - lo.y);
        if extent <= T::zero() {
            return Err(ImageError::DegenerateConfiguration);
        }
        let two = T::lit(2.0);
        let size = T::count(size);
        let scale = size * (T::one() - two * margin) / extent;
        let (cx, cy) = ((lo.x + hi.x) / two, (lo.y + hi.y) / two);
        let centre = (size - T::one()) / two;
        Ok(self.map(|p| Point::new((p.x - cx) * scale + centre, (p.y - cy) * scale + centre)))
    }
}

/// Pointwise mean of a non-empty list of landmark sets.
pub fn compute_template<T: Scalar>(sets: &[LandmarkSet<T>]) -> Result<LandmarkSet<T>> {
    let first = sets.first().ok_or(ImageError::EmptyInput)?;
    let n = T::count(sets.len());
    let points = (0..first.points.len())
        .map(|i| {
            let (sx, sy) = sets.iter().fold((T::zero(), T::zero()), |(sx, sy), s| {
                (sx + s.points[i].x, sy + s.points[i].y)
            });
            Point::new(sx / n, sy / n)
        })
        .collect();
    LandmarkSet::new(points)
}

/// Half-open pixel box `[left, right) x [top, bottom)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub left: i64,
    pub top: i64,
    pub right: i64,
    pub bottom: i64,
}

impl BoundingBox {
    pub fn new(left: i64, top: i64, right: i64, bottom: i64) -> Result<Self> {
        if left >= right || top >= bottom {
            return Err(ImageError::InvalidBox {
                left,
                top,
                right,
                bottom,
            });
        }
        Ok(Self {
            left,
            top,
            right,
            bottom,
        })
    }

    /// Intersection with the frame; may be empty when the box lies outside it.
    pub fn clamped(&self, width: usize, height: usize) -> Self {
        let (w, h) = (width as i64, height as i64);
        Self {
            left: self.left.clamp(0, w),
            top: self.top.clamp(0, h),
            right: self.right.clamp(0, w),
            bottom: self.bottom.clamp(0, h),
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        let (x, y) = (x as i64, y as i64);
        x >= self.left && x < self.right && y >= self.top && y < self.bottom
    }

    /// The box mapped through a per-axis scale, rounded outward.
    pub fn scaled(&self, sx: f64, sy: f64) -> Self {
        Self {
            left: (self.left as f64 * sx).floor() as i64,
            top: (self.top as f64 * sy).floor() as i64,
            right: (self.right as f64 * sx).ceil() as i64,
            bottom: (self.bottom as f64 * sy).ceil() as i64,
        }
    }
}

/// `p -> scale * rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform<T> {
    pub scale: T,
    pub rotation: [[T; 2]; 2],
    pub translation: [T; 2],
}

impl<T: Scalar> SimilarityTransform<T> {
    pub fn identity() -> Self {
        Self::from_angle(T::one(), T::zero(), [T::zero(); 2])
    }

    pub fn from_angle(scale: T, angle: T, translation: [T; 2]) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            scale,
            rotation: [[c, -s], [s, c]],
            translation,
        }
    }

    pub fn angle(&self) -> T {
        self.rotation[1][0].atan2(self.rotation[0][0])
    }

    pub fn apply(&self, p: Point<T>) -> Point<T> {
        let r = &self.rotation;
        Point::new(
            self.scale * (r[0][0] * p.x + r[0][1] * p.y) + self.translation[0],
            self.scale * (r[1][0] * p.x + r[1][1] * p.y) + self.translation[1],
        )
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let rt = [[r[0][0], r[1][0]], [r[0][1], r[1][1]]];
        let scale = T::one() / self.scale;
        let [tx, ty] = self.translation;
        Self {
            scale,
            rotation: rt,
            translation: [
                -scale * (rt[0][0] * tx + rt[0][1] * ty),
                -scale * (rt[1][0] * tx + rt[1][1] * ty),
            ],
        }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Self) -> Self {
        let (a, b) = (&self.rotation, &first.rotation);
        let rotation = std::array::from_fn(|i| {
            std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j])
        });
        let t = first.translation;
        let moved = Point::new(
            self.scale * (a[0][0] * t[0] + a[0][1] * t[1]) + self.translation[0],
            self.scale * (a[1][0] * t[0] + a[1][1] * t[1]) + self.translation[1],
        );
        Self {
            scale: self.scale * first.scale,
            rotation,
            translation: [moved.x, moved.y],
        }
    }

    /// Largest deviation of `rotationᵀ·rotation` from the identity, and of det from 1.
    pub fn orthonormality_error(&self) -> T {
        let r = &self.rotation;
        let g00 = r[0][0] * r[0][0] + r[1][0] * r[1][0] - T::one();
        let g11 = r[0][1] * r[0][1] + r[1][1] * r[1][1] - T::one();
        let g01 = r[0][0] * r[0][1] + r[1][0] * r[1][1];
        let det = r[0][0] * r[1][1] - r[0][1] * r[1][0] - T::one();
        g00.abs().max(g11.abs()).max(g01.abs()).max(det.abs())
    }
}

/// Least-squares similarity transform mapping `src` onto `dst` (any equal
/// number of points).
///
/// Closed form in 2-D: with centred points `s_i`, `d_i`,
/// `a = Σ s_i·d_i`, `b = Σ s_i × d_i`, the optimal rotation angle is
/// `atan2(b, a)` and the scale is `sqrt(a² + b²) / Σ |s_i|²`. The rotation is
/// proper by construction, so no reflection can be returned.
pub fn fit_similarity<T: Scalar>(src: &[Point<T>], dst: &[Point<T>]) -> Result<SimilarityTransform<T>> {
    if src.len() != dst.len() || src.is_empty() {
        return Err(ImageError::LandmarkCount(src.len().min(dst.len())));
    }
    let n = T::count(src.len());
    let centroid = |pts: &[Point<T>]| {
        let (sx, sy) = pts
            .iter()
            .fold((T::zero(), T::zero()), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / n, sy / n)
    };
    let (ms, md) = (centroid(src), centroid(dst));
    let (mut a, mut b, mut var) = (T::zero(), T::zero(), T::zero());
    for (s, d) in src.iter().zip(dst) {
        let (sx, sy) = (s.x - ms.x, s.y - ms.y);
        let (dx, dy) = (d.x - md.x, d.y - md.y);
        a = a + sx * dx + sy * dy;
        b = b + sx * dy - sy * dx;
        var = var + sx * sx + sy * sy;
    }
    let norm = a.hypot(b);
    if var <= T::zero() || norm <= T::zero() || !norm.is_finite() {
        return Err(ImageError::DegenerateConfiguration);
    }
    let (c, s) = (a / norm, b / norm);
    let scale = norm / var;
    let rotation = [[c, -s], [s, c]];
    let translation = [
        md.x - scale * (c * ms.x - s * ms.y),
        md.y - scale * (s * ms.x + c * ms.y),
    ];
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

pub fn estimate_similarity_transform<T: Scalar>(
    src: &LandmarkSet<T>,
    dst: &LandmarkSet<T>,
) -> Result<SimilarityTransform<T>> {
    fit_similarity(&src.points, &dst.points)
}

/// Fills an image by inverse mapping: output pixel `(u, v)` takes the bilinear
/// sample of `src` at `inverse(u, v)`; samples outside the source are black.
pub fn warp_inverse<T: Scalar>(
    src: &FrameImage,
    inverse: &SimilarityTransform<T>,
    width: usize,
    height: usize,
) -> FrameImage {
    let mut pixels = Vec::with_capacity(width * height * 3);
    for v in 0..height {
        for u in 0..width {
            let p = inverse.apply(Point::new(T::count(u), T::count(v)));
            match src.sample_bilinear(p.x.as_f64(), p.y.as_f64()) {
                Some(rgb) => pixels.extend(rgb.map(quantize)),
                None => pixels.extend([0u8; 3]),
            }
        }
    }
    FrameImage::new(width, height, pixels).expect("sized buffer")
}

/// Aligned 256x256 face crop.
///
/// `template` must already be expressed in output coordinates (see
/// [`LandmarkSet::fit_to_canvas`]). The frame is warped by the similarity
/// transform taking the (frame-clamped) landmarks onto the template.
pub fn make_face_condition<T: Scalar>(
    frame: &FrameImage,
    landmarks: &LandmarkSet<T>,
    template: &LandmarkSet<T>,
) -> Result<FrameImage> {
    let landmarks = landmarks.clamped_to(frame.width, frame.height);
    let to_template = estimate_similarity_transform(&landmarks, template)?;
    Ok(warp_inverse(frame, &to_template.inverse(), CONDITION_SIZE, CONDITION_SIZE))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropAnchor {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillSource {
    /// Mean of the pixels outside the face box.
    OutsideBox,
    /// The face box covered the whole frame; the global mean was used instead.
    GlobalMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundCondition {
    pub image: FrameImage,
    pub fill: [u8; 3],
    pub anchor: CropAnchor,
    pub fill_source: FillSource,
}

/// Face-free background crop.
///
/// The face box is painted with the per-channel mean of every pixel outside
/// it, then a 256x256 window is cut from the side away from the face: a face
/// left of centre takes the window at the right edge, otherwise the window at
/// the left edge. The window is anchored at the top row.
pub fn make_background_condition(frame: &FrameImage, face_box: &BoundingBox) -> Result<BackgroundCondition> {
    let (w, h) = (frame.width, frame.height);
    if w < CONDITION_SIZE || h < CONDITION_SIZE {
        return Err(ImageError::FrameTooSmall { width: w, height: h });
    }
    let bx = face_box.clamped(w, h);
    let (mut sum, mut count) = ([0u64; 3], 0u64);
    for y in 0..h {
        for x in 0..w {
            if !bx.contains(x, y) {
                let px = frame.pixel(x, y);
                for c in 0..3 {
                    sum[c] += px[c] as u64;
                }
                count += 1;
            }
        }
    }
    let fill_source = if count == 0 {
        for (c, s) in sum.iter_mut().enumerate() {
            *s = frame.pixels.iter().skip(c).step_by(3).map(|&v| v as u64).sum();
        }
        count = (w * h) as u64;
        FillSource::GlobalMean
    } else {
        FillSource::OutsideBox
    };
    // Integer round-half-up, which is half-away-from-zero for non-negative means.
    let fill = sum.map(|s| ((2 * s + count) / (2 * count)) as u8);

    let mut filled = frame.clone();
    for y in bx.top.max(0) as usize..bx.bottom.max(0) as usize {
        for x in bx.left.max(0) as usize..bx.right.max(0) as usize {
            filled.set_pixel(x, y, fill);
        }
    }
    let anchor = if bx.left + bx.right < w as i64 {
        CropAnchor::Right
    } else {
        CropAnchor::Left
    };
    let x0 = match anchor {
        CropAnchor::Right => w - CONDITION_SIZE,
        CropAnchor::Left => 0,
    };
    Ok(BackgroundCondition {
        image: filled.crop(x0, 0, CONDITION_SIZE, CONDITION_SIZE)?,
        fill,
        anchor,
        fill_source,
    })
}

/// Bilinear resize with pixel-centre alignment; source coordinates are
/// clamped to the image so no black border is introduced.
pub fn resize_bilinear(src: &FrameImage, width: usize, height: usize) -> FrameImage {
    if width == src.width && height == src.height {
        return src.clone();
    }
    let (sx, sy) = (src.width as f64 / width as f64, src.height as f64 / height as f64);
    let (maxx, maxy) = ((src.width - 1) as f64, (src.height - 1) as f64);
    let mut pixels = Vec::with_capacity(width * height * 3);
    for v in 0..height {
        let y = ((v as f64 + 0.5) * sy - 0.5).clamp(0.0, maxy);
        for u in 0..width {
            let x = ((u as f64 + 0.5) * sx - 0.5).clamp(0.0, maxx);
            let rgb = src.sample_bilinear(x, y).expect("clamped coordinate");
            pixels.extend(rgb.map(quantize));
        }
    }
    FrameImage::new(width, height, pixels).expect("sized buffer")
}

/// The whole frame resized to 465x256.
pub fn make_entire_frame_condition(frame: &FrameImage) -> FrameImage {
    resize_bilinear(frame, ENTIRE_FRAME_WIDTH, ENTIRE_FRAME_HEIGHT)
}

/// Pooled spread of an image set around its mean image, in 8-bit units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityStat<T> {
    pub sigma: T,
}

/// Population standard deviation of every pixel value about the per-pixel,
/// per-channel mean image, pooled over images, pixels and channels.
///
/// Evaluated in exact integer arithmetic: with `S_p` the sum of values at
/// position `p` over the `N` images,
/// `N² · P · σ² = N · Σ v² − Σ_p S_p²`, so the result is independent of image
/// order and summation order.
pub fn image_set_sigma<T: Scalar>(images: &[FrameImage]) -> Result<SimilarityStat<T>> {
    let first = images.first().ok_or(ImageError::EmptyInput)?;
    for im in images {
        if im.width != first.width || im.height != first.height {
            return Err(ImageError::DimensionMismatch(
                first.width,
                first.height,
                im.width,
                im.height,
            ));
        }
    }
    let positions = first.pixels.len();
    let n = images.len() as u128;
    let mut sums = vec![0u64; positions];
    let mut sum_sq: u128 = 0;
    for im in images {
        for (s, &v) in sums.iter_mut().zip(&im.pixels) {
            *s += v as u64;
            sum_sq += (v as u128) * (v as u128);
        }
    }
    let sum_s2: u128 = sums.iter().map(|&s| (s as u128) * (s as u128)).sum();
    let numerator = n * sum_sq - sum_s2;
    let denominator = n * n * positions as u128;
    let var = T::from_u128(numerator).expect("finite") / T::from_u128(denominator).expect("finite");
    Ok(SimilarityStat { sigma: var.sqrt() })
}
