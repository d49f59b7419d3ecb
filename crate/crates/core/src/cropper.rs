//! Letterbox removal and aspect-constrained crop candidates.
//!
//! Candidates come from a grid of anchor points; face rules reject crops
//! that cut through faces or frame them badly, and a pluggable scorer ranks
//! the survivors.

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::config::{AspectTag, CropConfig};
use crate::error::{Error, Result};
use crate::model::{Grid, Point, Rect};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LetterboxEstimate {
    pub top_rows: u32,
    pub bottom_rows: u32,
    pub sample_size: usize,
    /// `(frame_id, top, bottom)` per sampled frame.
    pub samples: Vec<(u64, u32, u32)>,
    /// Every sampled frame was (nearly) black.
    pub all_black: bool,
}

impl LetterboxEstimate {
    pub fn none() -> Self {
        Self {
            top_rows: 0,
            bottom_rows: 0,
            sample_size: 0,
            samples: Vec::new(),
            all_black: false,
        }
    }

    pub fn content_height(&self, height: u32) -> u32 {
        height - self.top_rows - self.bottom_rows
    }
}

/// Pick up to `size` distinct indices out of `n`, sorted.
pub fn letterbox_sample(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, size.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

fn row_is_content(img: &RgbImage, y: u32, black_level: u8, fraction: f64) -> bool {
    let lit = (0..img.width())
        .filter(|&x| {
            let p = img.get_pixel(x, y).0;
            let l = 0.2126 * f64::from(p[0]) + 0.7152 * f64::from(p[1]) + 0.0722 * f64::from(p[2]);
            l > f64::from(black_level)
        })
        .count();
    lit as f64 >= fraction * f64::from(img.width())
}

/// Bar heights of a single frame: rows above the first content row and
/// below the last one. A frame without content rows reports its full
/// height for both.
pub fn frame_bars(img: &RgbImage, black_level: u8, fraction: f64) -> (u32, u32) {
    let h = img.height();
    let top = (0..h).find(|&y| row_is_content(img, y, black_level, fraction));
    match top {
        None => (h, h),
        Some(top) => {
            let last = (0..h)
                .rev()
                .find(|&y| row_is_content(img, y, black_level, fraction))
                .unwrap_or(top);
            (top, h - 1 - last)
        }
    }
}

/// Estimate letterbox bars as the median of per-frame bar heights.
pub fn detect_letterbox(frames: &[(u64, &RgbImage)], cfg: &CropConfig) -> Result<LetterboxEstimate> {
    let Some((_, first)) = frames.first() else {
        return Err(Error::Validation("letterbox detection needs at least one frame".into()));
    };
    let height = first.height();
    let samples: Vec<(u64, u32, u32)> = frames
        .iter()
        .map(|(id, img)| {
            let (t, b) = frame_bars(img, cfg.black_level, cfg.letterbox_nonblack_fraction);
            (*id, t, b)
        })
        .collect();
    let median = |mut v: Vec<u32>| {
        v.sort_unstable();
        v[(v.len() - 1) / 2]
    };
    let top = median(samples.iter().map(|s| s.1).collect());
    let bottom = median(samples.iter().map(|s| s.2).collect());
    let all_black = top + bottom >= height;
    if all_black {
        warn!("video appears all black; no letterbox removed");
    }
    Ok(LetterboxEstimate {
        top_rows: if all_black { 0 } else { top },
        bottom_rows: if all_black { 0 } else { bottom },
        sample_size: samples.len(),
        samples,
        all_black,
    })
}

/// Remove letterbox rows from a frame.
pub fn strip_letterbox(img: &RgbImage, est: &LetterboxEstimate) -> RgbImage {
    let h = est.content_height(img.height());
    image::imageops::crop_imm(img, 0, est.top_rows, img.width(), h).to_image()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    OffCenterSingleFace,
    SmallFaceEmphasis,
    BisectsFace,
    AreaTooSmall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropCandidate {
    /// Post-letterbox coordinates.
    pub rect: Rect,
    pub aspect: AspectTag,
    pub score: f64,
    pub face_centered: bool,
    pub rejected_reason: Option<RejectReason>,
}

impl CropCandidate {
    fn new(rect: Rect, aspect: AspectTag) -> Self {
        Self {
            rect,
            aspect,
            score: 0.0,
            face_centered: false,
            rejected_reason: None,
        }
    }
}

/// Largest crop of the given ratio that fits in `w × h`.
pub fn maximal_crop(w: u32, h: u32, a: u32, b: u32) -> (i64, i64) {
    let (w, h, a, b) = (i64::from(w), i64::from(h), i64::from(a), i64::from(b));
    if w * b >= h * a {
        ((h * a + b / 2) / b, h)
    } else {
        (w, (w * b + a / 2) / a)
    }
}

/// Enumerate grid-anchored crops of one aspect.
///
/// Anchors sit on a `(G+1) × (G+1)` lattice. Each anchor paired with a
/// later anchor column (or row) fixes the width (or height); the other side
/// follows from the ratio. Crops smaller than `min_area_ratio` of the
/// maximal one are returned flagged [`RejectReason::AreaTooSmall`].
pub fn generate_crop_candidates(width: u32, height: u32, aspect: AspectTag, cfg: &CropConfig) -> Result<Vec<CropCandidate>> {
    if width < 16 || height < 16 {
        return Err(Error::Domain(format!("{width}x{height} is too small to crop")));
    }
    let AspectTag::Ratio(a, b) = aspect else {
        return Ok(vec![CropCandidate::new(
            Rect::new(0, 0, i64::from(width), i64::from(height)),
            aspect,
        )]);
    };
    let (w, h) = (i64::from(width), i64::from(height));
    let (a, b) = (i64::from(a), i64::from(b));
    let g = cfg.grid as i64;
    let xs: Vec<i64> = (0..=g).map(|i| (i * w + g / 2) / g).collect();
    let ys: Vec<i64> = (0..=g).map(|j| (j * h + g / 2) / g).collect();
    let (mw, mh) = maximal_crop(width, height, a as u32, b as u32);
    let max_area = (mw * mh) as f64;

    let mut rects = std::collections::BTreeSet::new();
    rects.insert(((w - mw) / 2, (h - mh) / 2, mw, mh));
    for &x0 in &xs {
        for &y0 in &ys {
            for &x1 in xs.iter().filter(|&&x| x > x0) {
                let cw = x1 - x0;
                let ch = (cw * b + a / 2) / a;
                if ch > 0 && y0 + ch <= h {
                    rects.insert((x0, y0, cw, ch));
                }
            }
            for &y1 in ys.iter().filter(|&&y| y > y0) {
                let ch = y1 - y0;
                let cw = (ch * a + b / 2) / b;
                if cw > 0 && x0 + cw <= w {
                    rects.insert((x0, y0, cw, ch));
                }
            }
        }
    }
    Ok(rects
        .into_iter()
        .map(|(x, y, cw, ch)| {
            let mut c = CropCandidate::new(Rect::new(x, y, cw, ch), aspect);
            if ((cw * ch) as f64) < cfg.min_area_ratio * max_area {
                c.rejected_reason = Some(RejectReason::AreaTooSmall);
            }
            c
        })
        .collect())
}

/// What the face rules need to know about one face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceBox {
    pub bbox: Rect,
    pub center: Point,
}

/// Apply the face rules, setting `rejected_reason` and `face_centered`.
///
/// A candidate is rejected when it cuts through a face, when it keeps a
/// face but leaves out one at least `small_face_ratio` times larger, or,
/// for portrait crops, when its only face sits outside the central band.
pub fn filter_crops(candidates: &mut [CropCandidate], faces: &[FaceBox], cfg: &CropConfig) {
    for c in candidates.iter_mut() {
        let r = c.rect;
        let contained: Vec<&FaceBox> = faces.iter().filter(|f| r.contains_rect(&f.bbox)).collect();
        let cx = |f: &FaceBox| (f.center.x - r.x as f64) / r.w as f64;
        c.face_centered = contained
            .iter()
            .any(|f| (cx(f) - 0.5).abs() <= cfg.face_centered_band / 2.0);
        if c.rejected_reason.is_some() {
            continue;
        }
        let bisects = faces.iter().any(|f| {
            let o = r.overlap_area(&f.bbox);
            o > 0 && o < f.bbox.area()
        });
        let emphasis = || {
            contained.iter().any(|small| {
                faces.iter().any(|big| {
                    !r.contains_rect(&big.bbox)
                        && big.bbox.area() as f64 >= cfg.small_face_ratio * small.bbox.area() as f64
                })
            })
        };
        let off_center = || {
            c.aspect.is_portrait()
                && contained.len() == 1
                && (cx(contained[0]) - 0.5).abs() > cfg.center_band / 2.0
        };
        c.rejected_reason = if bisects {
            Some(RejectReason::BisectsFace)
        } else if emphasis() {
            Some(RejectReason::SmallFaceEmphasis)
        } else if off_center() {
            Some(RejectReason::OffCenterSingleFace)
        } else {
            None
        };
    }
}

/// Scores a crop rectangle; higher is better.
pub trait CropScorer: Sync {
    fn score(&self, rect: &Rect) -> Result<f64>;
}

/// Summed-area table over a per-pixel mass map.
#[derive(Debug, Clone)]
pub struct MassIntegral {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl MassIntegral {
    /// Resample `grid` to `width × height` pixels and integrate.
    pub fn new(grid: &Grid, width: u32, height: u32) -> Self {
        let (w, h) = (width as usize, height as usize);
        let px = grid.resample_nearest(w, h);
        let mut table = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += px.data[y * w + x];
                table[(y + 1) * (w + 1) + x + 1] = table[y * (w + 1) + x + 1] + row;
            }
        }
        Self {
            width: w,
            height: h,
            table,
        }
    }

    pub fn total(&self) -> f64 {
        self.table[self.table.len() - 1]
    }

    pub fn mass(&self, r: &Rect) -> f64 {
        let clamp = |v: i64, n: usize| v.clamp(0, n as i64) as usize;
        let (x0, x1) = (clamp(r.x, self.width), clamp(r.right(), self.width));
        let (y0, y1) = (clamp(r.y, self.height), clamp(r.bottom(), self.height));
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let w = self.width + 1;
        self.table[y1 * w + x1] - self.table[y0 * w + x1] - self.table[y1 * w + x0] + self.table[y0 * w + x0]
    }
}

/// Default scorer: saliency mass kept inside the crop, minus a penalty for
/// mass hugging the crop border, relative to the frame's total mass.
#[derive(Debug, Clone)]
pub struct SaliencyCropScorer {
    integral: MassIntegral,
    border_fraction: f64,
    border_penalty: f64,
}

impl SaliencyCropScorer {
    pub fn new(saliency: &Grid, width: u32, height: u32, cfg: &CropConfig) -> Self {
        Self {
            integral: MassIntegral::new(saliency, width, height),
            border_fraction: cfg.border_fraction,
            border_penalty: cfg.border_penalty,
        }
    }
}

impl CropScorer for SaliencyCropScorer {
    fn score(&self, r: &Rect) -> Result<f64> {
        let total = self.integral.total();
        if total <= 0.0 {
            return Ok(0.0);
        }
        let inside = self.integral.mass(r);
        let bx = (r.w as f64 * self.border_fraction).round() as i64;
        let by = (r.h as f64 * self.border_fraction).round() as i64;
        let inner = Rect::new(r.x + bx, r.y + by, r.w - 2 * bx, r.h - 2 * by);
        let border = inside - if inner.is_empty() { 0.0 } else { self.integral.mass(&inner) };
        Ok((inside - self.border_penalty * border) / total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCrops {
    pub best: CropCandidate,
    pub alternates: Vec<CropCandidate>,
    /// Best face-centred crop, when it is not already `best`.
    pub face_centered: Option<CropCandidate>,
    /// Set when no candidate survived and the least-rejected one was used.
    pub fallback_reason: Option<RejectReason>,
}

fn order(a: &CropCandidate, b: &CropCandidate) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.rect.area().cmp(&a.rect.area()))
        .then(a.rect.y.cmp(&b.rect.y))
        .then(a.rect.x.cmp(&b.rect.x))
}

/// Rank candidates of one (frame, aspect).
///
/// Survivors are ordered by score, then area, then top-left position. When
/// every candidate was rejected, the best one among the mildest rejection
/// reason is returned instead. Returns `None` for an empty input.
pub fn rank_crops(candidates: &[CropCandidate], scorer: &dyn CropScorer, alternates: usize) -> Option<RankedCrops> {
    let scored: Vec<CropCandidate> = candidates
        .iter()
        .filter_map(|c| match scorer.score(&c.rect) {
            Ok(s) if s.is_finite() => Some(CropCandidate { score: s, ..c.clone() }),
            Ok(_) | Err(_) => {
                warn!(rect = %c.rect, "crop scorer failed; dropping candidate");
                None
            }
        })
        .collect();
    let mut survivors: Vec<CropCandidate> = scored
        .iter()
        .filter(|c| c.rejected_reason.is_none())
        .cloned()
        .collect();
    let mut fallback_reason = None;
    if survivors.is_empty() {
        let mildest = scored.iter().filter_map(|c| c.rejected_reason).min()?;
        fallback_reason = Some(mildest);
        survivors = scored
            .into_iter()
            .filter(|c| c.rejected_reason == Some(mildest))
            .collect();
    }
    survivors.sort_by(order);
    let best = survivors[0].clone();
    let face_centered = survivors
        .iter()
        .find(|c| c.face_centered)
        .filter(|c| c.rect != best.rect)
        .cloned();
    Some(RankedCrops {
        alternates: survivors.iter().skip(1).take(alternates).cloned().collect(),
        best,
        face_centered,
        fallback_reason,
    })
}
