//! Shared domain types and geometry.
//!
//! Pixel coordinates are integers with a top-left origin and y pointing down.
//! Every [`Rect`] is half-open: it covers `[x, x + w) × [y, y + h)`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cluster label reserved for points that density clustering leaves unassigned.
pub const NOISE: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    pub video_id: String,
    pub fps: f64,
    pub frame_count: u64,
    #[serde(default)]
    pub duration_s: f64,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub keywords: Vec<Keyword>,
    pub embedding_dim: usize,
}

impl VideoManifest {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Validation(format!("fps must be > 0, got {}", self.fps)));
        }
        if self.frame_count < 1 {
            return Err(Error::Validation("frame_count must be >= 1".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Validation("embedding_dim must be > 0".into()));
        }
        for kw in &self.keywords {
            if kw.text.trim().is_empty() {
                return Err(Error::Validation("keyword text must not be blank".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeywordSource {
    Metadata,
    RemoteExtraction,
    UserAdded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub text: String,
    /// Filled from the keyword embedding sidecar during ingest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
    #[serde(default = "default_keyword_source")]
    pub source: KeywordSource,
}

fn default_keyword_source() -> KeywordSource {
    KeywordSource::Metadata
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub luminance: f64,
    pub sharpness: f64,
    pub uniformity: f64,
    pub stillness: f64,
}

impl FrameMetrics {
    pub fn is_valid(&self) -> bool {
        [self.luminance, self.sharpness, self.uniformity, self.stillness]
            .iter()
            .all(|v| v.is_finite())
            && (0.0..=1.0).contains(&self.uniformity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub timestamp_s: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub letterbox_top: u32,
    #[serde(default)]
    pub letterbox_bottom: u32,
    #[serde(default)]
    pub shot_id: u64,
    #[serde(default)]
    pub subshot_id: u64,
    #[serde(default)]
    pub group_id: u64,
    #[serde(default)]
    pub is_keyframe: bool,
    #[serde(default)]
    pub metrics: FrameMetrics,
}

impl FrameRecord {
    /// Height of the frame once letterbox rows are removed.
    pub fn content_height(&self) -> u32 {
        self.height - self.letterbox_top - self.letterbox_bottom
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Frame,
    Crop,
    Face,
    Keyword,
    Prompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub id: String,
    pub kind: EmbeddingKind,
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(id: impl Into<String>, kind: EmbeddingKind, values: Vec<f32>) -> Self {
        Self {
            id: id.into(),
            kind,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

pub(crate) fn norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

/// Cosine of the angle between two embeddings.
///
/// Zero-norm inputs are rejected instead of mapped to 0.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine_slices(&a.values, &b.values)
}

pub fn cosine_slices(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Domain("empty embedding".into()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("zero-norm embedding".into()));
    }
    let dot: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl Rect {
    pub const fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> i64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h
    }

    pub fn area(&self) -> i64 {
        self.w.max(0) * self.h.max(0)
    }

    pub fn is_empty(&self) -> bool {
        self.w <= 0 || self.h <= 0
    }

    pub fn center(&self) -> Point {
        Point::new(
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| Rect::new(x0, y0, x1 - x0, y1 - y0))
    }

    pub fn overlap_area(&self, other: &Rect) -> i64 {
        self.intersection(other).map_or(0, |r| r.area())
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= self.x as f64
            && p.x < self.right() as f64
            && p.y >= self.y as f64
            && p.y < self.bottom() as f64
    }

    /// Clamp into `[0, width) × [0, height)`. Returns `None` if nothing remains.
    pub fn clamp_to(&self, width: i64, height: i64) -> Option<Rect> {
        self.intersection(&Rect::new(0, 0, width, height))
    }

    pub fn translate(&self, dx: i64, dy: i64) -> Rect {
        Rect::new(self.x + dx, self.y + dy, self.w, self.h)
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}+{}+{}", self.w, self.h, self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(&self, other: &Point) -> Point {
        Point::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LandmarkScheme {
    SixPoint,
    NinePoint,
}

impl LandmarkScheme {
    pub fn contour_len(self) -> usize {
        match self {
            LandmarkScheme::SixPoint => 6,
            LandmarkScheme::NinePoint => 8,
        }
    }
}

/// Landmarks for one eye.
///
/// Contour indexing runs clockwise from the left horizontal extreme:
/// six-point `p1..p6` with `p1`/`p4` as extremes, nine-point `p1..p8`
/// with `p1`/`p5` as extremes. The pupil is only present for nine-point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyePoints {
    pub contour: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pupil: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeLandmarks {
    pub scheme: LandmarkScheme,
    pub left: Option<EyePoints>,
    pub right: Option<EyePoints>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Neutral,
    Anger,
    Fear,
    Happiness,
    Sadness,
    Surprise,
    Disgust,
    Contempt,
}

impl Emotion {
    pub const ALL: [Emotion; 8] = [
        Emotion::Neutral,
        Emotion::Anger,
        Emotion::Fear,
        Emotion::Happiness,
        Emotion::Sadness,
        Emotion::Surprise,
        Emotion::Disgust,
        Emotion::Contempt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Neutral => "neutral",
            Emotion::Anger => "anger",
            Emotion::Fear => "fear",
            Emotion::Happiness => "happiness",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
            Emotion::Disgust => "disgust",
            Emotion::Contempt => "contempt",
        }
    }
}

/// Framing category by camera-to-subject distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ShotScale {
    #[serde(rename = "long")]
    Long,
    #[serde(rename = "medium")]
    Medium,
    #[serde(rename = "close-up")]
    CloseUp,
}

impl ShotScale {
    pub fn as_str(self) -> &'static str {
        match self {
            ShotScale::Long => "long",
            ShotScale::Medium => "medium",
            ShotScale::CloseUp => "close-up",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub face_id: String,
    pub frame_id: u64,
    /// Detector box in post-letterbox frame coordinates.
    pub bbox: Rect,
    pub expanded_bbox: Rect,
    pub landmarks: Option<EyeLandmarks>,
    pub area_fraction: f64,
    pub ear_left: Option<f64>,
    pub ear_right: Option<f64>,
    pub eyes_closed: bool,
    /// Set when neither eye had usable landmarks.
    pub eye_state_unknown: bool,
    pub emotion: Emotion,
    pub cluster_id: i64,
    /// Opaque attributes carried from the detector output, unused by scoring.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, serde_json::Value>,
}

/// Row-major grid of non-negative reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Domain("grid must be non-empty".into()));
        }
        if data.len() != width * height {
            return Err(Error::Length {
                expected: width * height,
                found: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Nearest-neighbour resample onto a `width × height` grid.
    pub fn resample_nearest(&self, width: usize, height: usize) -> Grid {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
            let sy = sy.min(self.height - 1);
            for x in 0..width {
                let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                data.push(self.get(sx.min(self.width - 1), sy));
            }
        }
        Grid {
            width,
            height,
            data,
        }
    }

    /// Sub-grid covering cells `[x0, x1) × [y0, y1)`.
    pub fn window(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Grid {
        let mut data = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for y in y0..y1 {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x1]);
        }
        Grid {
            width: x1 - x0,
            height: y1 - y0,
            data,
        }
    }

    /// Cell range covered by a pixel rectangle when the grid spans a
    /// `frame_w × frame_h` image. A cell belongs to the rect when its
    /// centre falls inside it.
    pub fn cell_span(&self, rect: &Rect, frame_w: u32, frame_h: u32) -> (usize, usize, usize, usize) {
        let sx = self.width as f64 / f64::from(frame_w);
        let sy = self.height as f64 / f64::from(frame_h);
        let to_cell = |p: i64, s: f64, n: usize| -> usize {
            // first cell whose centre (c + 0.5) / s >= p
            let c = (p as f64 * s - 0.5).ceil().max(0.0) as usize;
            c.min(n)
        };
        let x0 = to_cell(rect.x, sx, self.width);
        let x1 = to_cell(rect.right(), sx, self.width).max(x0);
        let y0 = to_cell(rect.y, sy, self.height);
        let y1 = to_cell(rect.bottom(), sy, self.height).max(y0);
        (x0, y0, x1, y1)
    }
}

/// Predicted viewer attention for one frame, covering the full decoded frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub frame_id: u64,
    pub grid: Grid,
    pub normalized: bool,
}

impl SaliencyMap {
    pub fn new(frame_id: u64, grid: Grid) -> Result<Self> {
        if grid.data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "saliency map for frame {frame_id} has negative or non-finite cells"
            )));
        }
        Ok(Self {
            frame_id,
            grid,
            normalized: false,
        })
    }

    /// Rescale so cells sum to one. A zero-mass map is returned unchanged.
    pub fn normalized(&self) -> SaliencyMap {
        let total = self.grid.sum();
        if total <= 0.0 {
            return self.clone();
        }
        let data = self.grid.data.iter().map(|v| v / total).collect();
        SaliencyMap {
            frame_id: self.frame_id,
            grid: Grid {
                width: self.grid.width,
                height: self.grid.height,
                data,
            },
            normalized: true,
        }
    }
}

/// Per-pixel probability that title artwork is placed at that location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogoPriorMap {
    pub grid: Grid,
}

impl LogoPriorMap {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid
            .data
            .iter()
            .any(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::Validation("logo prior cells must lie in [0,1]".into()));
        }
        if grid.sum() <= 0.0 {
            return Err(Error::Config("logo prior has zero total mass".into()));
        }
        Ok(Self { grid })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new("t", EmbeddingKind::Frame, v.to_vec())
    }

    #[test]
    fn cosine_identity_and_orthogonality() {
        let a = emb(&[0.3, -1.2, 4.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let x = emb(&[1.0, 0.0]);
        let y = emb(&[0.0, 1.0]);
        assert_eq!(cosine_similarity(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn cosine_diagonal() {
        let v = cosine_similarity(&emb(&[1.0, 1.0]), &emb(&[1.0, 0.0])).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        let err = cosine_similarity(&emb(&[0.0, 0.0]), &emb(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(cosine_similarity(&emb(&[1.0]), &emb(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn rect_geometry() {
        let a = Rect::new(0, 0, 10, 10);
        let b = Rect::new(5, 5, 10, 10);
        assert_eq!(a.intersection(&b), Some(Rect::new(5, 5, 5, 5)));
        assert_eq!(a.overlap_area(&Rect::new(10, 0, 5, 5)), 0);
        assert!(a.contains_rect(&Rect::new(2, 2, 8, 8)));
        assert!(!a.contains_rect(&b));
        assert_eq!(Rect::new(-5, -5, 10, 10).clamp_to(100, 100), Some(Rect::new(0, 0, 5, 5)));
    }

    #[test]
    fn manifest_validation() {
        let mut m = VideoManifest {
            video_id: "v".into(),
            fps: 24.0,
            frame_count: 10,
            duration_s: 0.0,
            title: String::new(),
            summary: String::new(),
            keywords: vec![],
            embedding_dim: 4,
        };
        assert!(m.validate().is_ok());
        m.fps = -1.0;
        assert!(matches!(m.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn grid_cell_span_uses_cell_centres() {
        let g = Grid::filled(10, 10, 1.0);
        // grid over a 100x100 frame: each cell is 10 px, centres at 5, 15, 25, ...
        assert_eq!(g.cell_span(&Rect::new(0, 0, 100, 100), 100, 100), (0, 0, 10, 10));
        assert_eq!(g.cell_span(&Rect::new(0, 0, 50, 25), 100, 100), (0, 0, 5, 2));
        let r = g.resample_nearest(5, 5);
        assert_eq!(r.sum(), 25.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec_pair() -> impl Strategy<Value = (Vec<f32>, Vec<f32>)> {
            (1usize..24).prop_flat_map(|n| {
                (
                    prop::collection::vec(-10.0f32..10.0, n),
                    prop::collection::vec(-10.0f32..10.0, n),
                )
            })
        }

        proptest! {
            #[test]
            fn cosine_is_symmetric((a, b) in vec_pair()) {
                prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
                let ab = cosine_slices(&a, &b).unwrap();
                let ba = cosine_slices(&b, &a).unwrap();
                prop_assert!((ab - ba).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&ab));
            }

            #[test]
            fn cosine_is_scale_invariant_exact((a, b) in vec_pair(), e in -6i32..6) {
                prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
                // powers of two scale f32 values without rounding
                let c = 2f32.powi(e);
                let scaled: Vec<f32> = a.iter().map(|v| v * c).collect();
                let base = cosine_slices(&a, &b).unwrap();
                let s = cosine_slices(&scaled, &b).unwrap();
                prop_assert!((base - s).abs() < 1e-9);
            }

            #[test]
            fn cosine_is_scale_invariant((a, b) in vec_pair(), c in 0.01f64..100.0) {
                prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
                let scaled: Vec<f32> = a.iter().map(|v| (f64::from(*v) * c) as f32).collect();
                prop_assume!(norm(&scaled) > 1e-3);
                let base = cosine_slices(&a, &b).unwrap();
                let s = cosine_slices(&scaled, &b).unwrap();
                // f32 storage rounds the scaled vector; cosine is exact up to that rounding.
                prop_assert!((base - s).abs() < 1e-6);
            }
        }
    }
}
