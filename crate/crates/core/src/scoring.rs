//! Candidate scores: aesthetic, semantic consistency, logo space, on-face
//! focus and face position, plus normalization and weighted aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::config::{FaceAggregation, FacePositionTable, ScoringConfig, WeightConfig};
use crate::error::{Error, Result};
use crate::model::{cosine_slices, Grid, LogoPriorMap, Point, Rect};

/// Softmax over the cosines to a "good" and a "bad" prompt embedding.
pub fn aesthetic_score(image: &[f32], good: &[f32], bad: &[f32], temperature: f64) -> Result<f64> {
    let sg = cosine_slices(image, good)?;
    let sb = cosine_slices(image, bad)?;
    // logistic form of the two-way softmax, stable for any temperature
    Ok(1.0 / (1.0 + (temperature * (sb - sg)).exp()))
}

/// Raw cosine of one candidate embedding against every keyword.
pub fn semantic_cosines(candidate: &[f32], keywords: &[(String, Vec<f32>)]) -> Result<BTreeMap<String, f64>> {
    keywords
        .iter()
        .map(|(k, e)| Ok((k.clone(), cosine_slices(candidate, e)?)))
        .collect()
}

/// Mean of the selected keywords' cosines.
pub fn aggregate_semantic(cosines: &BTreeMap<String, f64>, selected: &[String]) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::Config("semantic aggregation needs at least one keyword".into()));
    }
    let mut sum = 0.0;
    for k in selected {
        sum += cosines
            .get(k)
            .ok_or_else(|| Error::Validation(format!("unknown keyword {k:?}")))?;
    }
    Ok(sum / selected.len() as f64)
}

/// Scale so the largest cell is 1. A zero map stays zero.
pub fn peak_normalize(grid: &Grid) -> Grid {
    let max = grid.max();
    if max <= 0.0 {
        return grid.clone();
    }
    Grid {
        width: grid.width,
        height: grid.height,
        data: grid.data.iter().map(|v| v / max).collect(),
    }
}

/// Per-cell mask of cells whose centre lies in any of `rects`, for a grid
/// spanning a `w × h` pixel area.
fn face_mask(grid: &Grid, rects: &[Rect], w: u32, h: u32) -> Vec<bool> {
    let mut mask = vec![false; grid.data.len()];
    for r in rects {
        let (x0, y0, x1, y1) = grid.cell_span(r, w, h);
        for y in y0..y1 {
            for x in x0..x1 {
                mask[y * grid.width + x] = true;
            }
        }
    }
    mask
}

/// Share of the logo prior left free of salient content and faces.
///
/// `saliency` must already be peak-normalized and cover the same `w × h`
/// area as the prior; the prior is resampled onto the saliency grid.
pub fn logo_score(prior: &LogoPriorMap, saliency: &Grid, faces: &[Rect], w: u32, h: u32) -> Result<f64> {
    let p = prior.grid.resample_nearest(saliency.width, saliency.height);
    let total = p.sum();
    if total <= 0.0 {
        return Err(Error::Config("logo prior has zero mass on this grid".into()));
    }
    let mask = face_mask(saliency, faces, w, h);
    let free: f64 = p
        .data
        .iter()
        .zip(&saliency.data)
        .zip(&mask)
        .map(|((pv, sv), &m)| if m { 0.0 } else { (pv - sv).max(0.0) })
        .sum();
    Ok((free / total).clamp(0.0, 1.0))
}

/// Fraction of saliency mass inside the union of face boxes; `None`
/// without faces or without saliency mass.
pub fn on_face_focus(saliency: &Grid, faces: &[Rect], w: u32, h: u32) -> Option<f64> {
    if faces.is_empty() {
        return None;
    }
    let total = saliency.sum();
    if total <= 0.0 {
        warn!("zero saliency mass; on-face focus not applicable");
        return None;
    }
    let mask = face_mask(saliency, faces, w, h);
    let inside: f64 = saliency
        .data
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v)
        .sum();
    Some((inside / total).clamp(0.0, 1.0))
}

/// Positional weight of a face centre inside a `w × h` image.
pub fn face_position_score(center: Point, w: u32, h: u32, table: &FacePositionTable) -> f64 {
    let (fw, fh) = (f64::from(w), f64::from(h));
    let row = ((center.y * 6.0 / fh).ceil() as i64 - 1).clamp(0, 5) as usize;
    let central = center.x >= table.band_left * fw && center.x <= table.band_right * fw;
    if central {
        table.rows[row]
    } else {
        table.side[row]
    }
}

pub fn aggregate_faces(values: &[f64], mode: FaceAggregation) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(match mode {
        FaceAggregation::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        FaceAggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
    })
}

/// Min-max scaling to `[0, 1]`; a constant column maps to 0.5.
pub fn normalize_column(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    values
        .iter()
        .map(|v| if span > 0.0 { ((v - min) / span).clamp(0.0, 1.0) } else { 0.5 })
        .collect()
}

/// [`normalize_column`] over the present entries only.
pub fn normalize_optional(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let mut norm = normalize_column(&present).into_iter();
    values.iter().map(|v| v.map(|_| norm.next().expect("one per value"))).collect()
}

/// Normalized scores of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub aesthetic: f64,
    /// Aggregate over the active keyword set.
    pub semantic: f64,
    pub semantic_by_keyword: BTreeMap<String, f64>,
    pub logo: f64,
    pub face_position: Option<f64>,
    pub on_face_focus: Option<f64>,
    #[serde(rename = "final")]
    pub final_score: f64,
}

/// Weighted mean over the applicable scores.
pub fn final_score(s: &ScoreVector, w: &WeightConfig) -> Result<f64> {
    let mut parts = vec![(w.aesthetic, s.aesthetic), (w.semantic, s.semantic), (w.logo, s.logo)];
    if let Some(v) = s.face_position {
        parts.push((w.face_position, v));
    }
    if let Some(v) = s.on_face_focus {
        parts.push((w.on_face_focus, v));
    }
    let wsum: f64 = parts.iter().map(|(w, _)| w).sum();
    if wsum <= 0.0 {
        return Err(Error::Config("all applicable weights are zero".into()));
    }
    Ok((parts.iter().map(|(w, v)| w * v).sum::<f64>() / wsum).clamp(0.0, 1.0))
}

/// Unnormalized scores of one candidate. Face components are kept per face
/// so the aggregation mode can change at query time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScores {
    pub aesthetic: f64,
    pub semantic: BTreeMap<String, f64>,
    pub logo: f64,
    pub face_position: Vec<f64>,
    pub on_face: Vec<f64>,
    /// Saliency mass inside the union of face boxes.
    pub on_face_union: Option<f64>,
}

impl RawScores {
    pub fn face_count(&self) -> usize {
        self.face_position.len()
    }
}

/// Active keyword list for a weight configuration: the configured subset,
/// or every known keyword when none is selected.
pub fn active_keywords(w: &WeightConfig, known: &[String]) -> Vec<String> {
    if w.keywords.is_empty() {
        known.to_vec()
    } else {
        w.keywords.clone()
    }
}

/// Normalize a candidate set column by column and compute finals.
///
/// All candidates must belong to the same aspect (the normalization
/// scope). `known_keywords` lists every keyword column available.
pub fn score_candidates(raws: &[&RawScores], known_keywords: &[String], w: &WeightConfig) -> Result<Vec<ScoreVector>> {
    w.validate()?;
    if raws.is_empty() {
        return Ok(Vec::new());
    }
    let keywords = active_keywords(w, known_keywords);
    let aesthetic = normalize_column(&raws.iter().map(|r| r.aesthetic).collect::<Vec<_>>());
    let logo = normalize_column(&raws.iter().map(|r| r.logo).collect::<Vec<_>>());
    let semantic = if keywords.is_empty() {
        if w.semantic > 0.0 {
            return Err(Error::Config("semantic weight is set but no keywords are available".into()));
        }
        vec![0.5; raws.len()]
    } else {
        let raw: Vec<f64> = raws
            .iter()
            .map(|r| aggregate_semantic(&r.semantic, &keywords))
            .collect::<Result<_>>()?;
        normalize_column(&raw)
    };
    let mut per_keyword: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for k in known_keywords {
        let col: Vec<f64> = raws
            .iter()
            .map(|r| r.semantic.get(k).copied().unwrap_or(0.0))
            .collect();
        per_keyword.insert(k, normalize_column(&col));
    }
    let mode = w.face_aggregation;
    let fp = normalize_optional(
        &raws
            .iter()
            .map(|r| aggregate_faces(&r.face_position, mode))
            .collect::<Vec<_>>(),
    );
    let of = normalize_optional(
        &raws
            .iter()
            .map(|r| aggregate_faces(&r.on_face, mode))
            .collect::<Vec<_>>(),
    );
    (0..raws.len())
        .map(|i| {
            let mut s = ScoreVector {
                aesthetic: aesthetic[i],
                semantic: semantic[i],
                semantic_by_keyword: per_keyword.iter().map(|(k, v)| (k.to_string(), v[i])).collect(),
                logo: logo[i],
                face_position: fp[i],
                on_face_focus: of[i],
                final_score: 0.0,
            };
            s.final_score = final_score(&s, w)?;
            Ok(s)
        })
        .collect()
}

/// A face as seen from inside one candidate crop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateFace {
    /// Crop-relative box.
    pub bbox: Rect,
    /// Crop-relative centre.
    pub center: Point,
}

/// Everything needed to score one candidate.
#[derive(Debug, Clone)]
pub struct CandidateInput<'a> {
    pub embedding: &'a [f32],
    /// Peak-normalized saliency covering exactly the crop.
    pub saliency: &'a Grid,
    pub width: u32,
    pub height: u32,
    pub faces: Vec<CandidateFace>,
}

/// Shared, read-only scoring resources of a video.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub good_prompt: Vec<f32>,
    pub bad_prompt: Vec<f32>,
    pub keywords: Vec<(String, Vec<f32>)>,
    pub logo_prior: LogoPriorMap,
    pub config: ScoringConfig,
}

impl Scorer {
    pub fn keyword_names(&self) -> Vec<String> {
        self.keywords.iter().map(|(k, _)| k.clone()).collect()
    }

    pub fn raw_scores(&self, c: &CandidateInput<'_>) -> Result<RawScores> {
        let boxes: Vec<Rect> = c.faces.iter().map(|f| f.bbox).collect();
        let total = c.saliency.sum();
        let on_face = if total > 0.0 {
            c.faces
                .iter()
                .map(|f| on_face_focus(c.saliency, &[f.bbox], c.width, c.height).unwrap_or(0.0))
                .collect()
        } else {
            Vec::new()
        };
        Ok(RawScores {
            aesthetic: aesthetic_score(c.embedding, &self.good_prompt, &self.bad_prompt, self.config.temperature)?,
            semantic: semantic_cosines(c.embedding, &self.keywords)?,
            logo: logo_score(&self.logo_prior, c.saliency, &boxes, c.width, c.height)?,
            face_position: c
                .faces
                .iter()
                .map(|f| face_position_score(f.center, c.width, c.height, &self.config.face_position))
                .collect(),
            on_face,
            on_face_union: on_face_focus(c.saliency, &boxes, c.width, c.height),
        })
    }
}

/// Cut the part of a full-frame saliency grid that covers `rect`.
///
/// `frame_w × frame_h` is the area the grid spans. When the rect covers
/// less than one cell, the nearest cell is used.
pub fn saliency_window(grid: &Grid, rect: &Rect, frame_w: u32, frame_h: u32) -> Grid {
    let (x0, y0, mut x1, mut y1) = grid.cell_span(rect, frame_w, frame_h);
    let x0 = x0.min(grid.width - 1);
    let y0 = y0.min(grid.height - 1);
    x1 = x1.max(x0 + 1).min(grid.width);
    y1 = y1.max(y0 + 1).min(grid.height);
    grid.window(x0, y0, x1, y1)
}

/// Equal-width histogram of a column over `[0, 1]`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut out = vec![0; bins.max(1)];
    for v in values {
        let b = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        out[b] += 1;
    }
    out
}
