//! Face bookkeeping on ingested detections: box expansion, eye state,
//! face centres and per-shot framing labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::config::FaceConfig;
use crate::error::{Error, Result};
use crate::ingest::{ArtifactSet, LandmarkRecord};
use crate::model::{EyeLandmarks, EyePoints, FaceRecord, LandmarkScheme, Point, Rect, ShotScale, NOISE};

/// Grow `bbox` by `factor` about its centre, clamped to the frame.
pub fn expand_bbox(bbox: &Rect, frame_w: u32, frame_h: u32, factor: f64) -> Rect {
    let c = bbox.center();
    let hw = bbox.w as f64 * factor / 2.0;
    let hh = bbox.h as f64 * factor / 2.0;
    let x0 = ((c.x - hw).round() as i64).max(0);
    let y0 = ((c.y - hh).round() as i64).max(0);
    let x1 = ((c.x + hw).round() as i64).min(i64::from(frame_w));
    let y1 = ((c.y + hh).round() as i64).min(i64::from(frame_h));
    Rect::new(x0, y0, (x1 - x0).max(0), (y1 - y0).max(0))
}

/// Eye aspect ratio: mean vertical eyelid opening over horizontal span.
///
/// Six-point: `(|p2−p6| + |p3−p5|) / (2·|p1−p4|)`.
/// Nine-point: `(|p2−p8| + |p3−p7| + |p4−p6|) / (3·|p1−p5|)`.
pub fn compute_ear(eye: &EyePoints, scheme: LandmarkScheme) -> Result<f64> {
    let p = &eye.contour;
    if p.len() != scheme.contour_len() {
        return Err(Error::Validation(format!(
            "{scheme:?} eye needs {} contour points, got {}",
            scheme.contour_len(),
            p.len()
        )));
    }
    let (pairs, h): (&[(usize, usize)], f64) = match scheme {
        LandmarkScheme::SixPoint => (&[(1, 5), (2, 4)], p[0].distance(&p[3])),
        LandmarkScheme::NinePoint => (&[(1, 7), (2, 6), (3, 5)], p[0].distance(&p[4])),
    };
    if h == 0.0 {
        return Err(Error::Domain("eye has zero horizontal span".into()));
    }
    let v: f64 = pairs.iter().map(|&(a, b)| p[a].distance(&p[b])).sum();
    Ok(v / (pairs.len() as f64 * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EyeState {
    pub closed: bool,
    pub unknown: bool,
}

/// Closed when the smaller available EAR is below `threshold`; a single
/// closed eye is enough. Without any EAR the state is unknown and treated
/// as open.
pub fn classify_eyes(ear_left: Option<f64>, ear_right: Option<f64>, threshold: f64) -> EyeState {
    let min = match (ear_left, ear_right) {
        (Some(l), Some(r)) => l.min(r),
        (Some(v), None) | (None, Some(v)) => v,
        (None, None) => {
            return EyeState {
                closed: false,
                unknown: true,
            }
        }
    };
    EyeState {
        closed: min < threshold,
        unknown: false,
    }
}

/// Per-eye EAR, `None` for a missing or unusable eye.
pub fn eye_ears(lm: &EyeLandmarks) -> (Option<f64>, Option<f64>) {
    let ear = |eye: &Option<EyePoints>| {
        eye.as_ref().and_then(|e| match compute_ear(e, lm.scheme) {
            Ok(v) => Some(v),
            Err(err) => {
                warn!(%err, "ignoring eye landmarks");
                None
            }
        })
    };
    (ear(&lm.left), ear(&lm.right))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceCenter {
    pub point: Point,
    /// The bbox centre was used because pupils were unavailable.
    pub fallback: bool,
}

impl FaceCenter {
    /// Express the centre relative to a crop's top-left corner.
    pub fn in_crop(&self, crop: &Rect) -> Point {
        Point::new(self.point.x - crop.x as f64, self.point.y - crop.y as f64)
    }
}

/// Midpoint between the pupils, or the bbox centre when they are missing.
pub fn face_center(face: &FaceRecord) -> FaceCenter {
    let pupils = face.landmarks.as_ref().and_then(|lm| {
        let l = lm.left.as_ref()?.pupil?;
        let r = lm.right.as_ref()?.pupil?;
        Some(l.midpoint(&r))
    });
    match pupils {
        Some(point) => FaceCenter {
            point,
            fallback: false,
        },
        None => FaceCenter {
            point: face.bbox.center(),
            fallback: true,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotScaleLabel {
    pub frame_id: u64,
    pub label: ShotScale,
    /// The label differs from the classifier's per-frame output.
    pub smoothed: bool,
}

/// Give every frame of a shot the shot's majority label.
///
/// Ties go to the tied label whose frame lies nearest the shot's temporal
/// midpoint (frame ids are taken as time order).
pub fn smooth_shot_scale(labels: &BTreeMap<u64, ShotScale>, shots: &[Vec<u64>]) -> Result<Vec<ShotScaleLabel>> {
    let mut out = Vec::new();
    for shot in shots {
        if shot.is_empty() {
            continue;
        }
        let missing: Vec<String> = shot
            .iter()
            .filter(|f| !labels.contains_key(f))
            .map(u64::to_string)
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation(format!(
                "frames without shot-scale label: {}",
                missing.join(", ")
            )));
        }
        let mut counts: BTreeMap<ShotScale, usize> = BTreeMap::new();
        for f in shot {
            *counts.entry(labels[f]).or_default() += 1;
        }
        let top = *counts.values().max().expect("non-empty shot");
        let tied: Vec<ShotScale> = counts.iter().filter(|(_, &c)| c == top).map(|(l, _)| *l).collect();
        let winner = if tied.len() == 1 {
            tied[0]
        } else {
            let first = *shot.iter().min().unwrap() as f64;
            let last = *shot.iter().max().unwrap() as f64;
            let mid = (first + last) / 2.0;
            let mut by_distance: Vec<u64> = shot.clone();
            by_distance.sort_by(|a, b| {
                (*a as f64 - mid)
                    .abs()
                    .total_cmp(&(*b as f64 - mid).abs())
                    .then(a.cmp(b))
            });
            by_distance
                .iter()
                .map(|f| labels[f])
                .find(|l| tied.contains(l))
                .expect("a tied label occurs in the shot")
        };
        for &f in shot {
            out.push(ShotScaleLabel {
                frame_id: f,
                label: winner,
                smoothed: labels[&f] != winner,
            });
        }
    }
    out.sort_by_key(|l| l.frame_id);
    Ok(out)
}

fn eye_points(points: &[[f64; 2]], scheme: LandmarkScheme) -> EyePoints {
    let n = scheme.contour_len();
    let pts: Vec<Point> = points.iter().map(|p| Point::new(p[0], p[1])).collect();
    let pupil = (scheme == LandmarkScheme::NinePoint && pts.len() > n).then(|| pts[n]);
    EyePoints {
        contour: pts.into_iter().take(n).collect(),
        pupil,
    }
}

/// Convert a landmark record to post-letterbox coordinates.
pub fn landmarks_from_record(rec: &LandmarkRecord, letterbox_top: u32) -> EyeLandmarks {
    let shift = |e: &Vec<[f64; 2]>| -> Vec<[f64; 2]> {
        e.iter()
            .map(|p| [p[0], p[1] - f64::from(letterbox_top)])
            .collect()
    };
    EyeLandmarks {
        scheme: rec.scheme,
        left: rec.left.as_ref().map(|e| eye_points(&shift(e), rec.scheme)),
        right: rec.right.as_ref().map(|e| eye_points(&shift(e), rec.scheme)),
    }
}

/// Frame geometry needed to place faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGeometry {
    pub width: u32,
    /// Height after letterbox removal.
    pub height: u32,
    pub letterbox_top: u32,
}

/// Build face records for the detections on the given frames.
///
/// Boxes move into post-letterbox coordinates and are clipped to the
/// content area; detections lying entirely inside a bar are dropped.
pub fn build_face_records(
    artifacts: &ArtifactSet,
    frames: &BTreeMap<u64, FrameGeometry>,
    cfg: &FaceConfig,
) -> Vec<FaceRecord> {
    let landmarks: BTreeMap<&str, &LandmarkRecord> = artifacts
        .landmarks
        .iter()
        .map(|l| (l.face_id.as_str(), l))
        .collect();
    let emotions: BTreeMap<&str, _> = artifacts
        .emotions
        .iter()
        .map(|e| (e.face_id.as_str(), e.emotion))
        .collect();
    let mut out = Vec::new();
    for det in &artifacts.faces {
        let Some(geo) = frames.get(&det.frame_id) else {
            continue;
        };
        let shifted = det.bbox.translate(0, -i64::from(geo.letterbox_top));
        let Some(bbox) = shifted.clamp_to(i64::from(geo.width), i64::from(geo.height)) else {
            continue;
        };
        let lm = landmarks
            .get(det.face_id.as_str())
            .map(|r| landmarks_from_record(r, geo.letterbox_top));
        let (ear_left, ear_right) = lm.as_ref().map_or((None, None), eye_ears);
        let state = classify_eyes(ear_left, ear_right, cfg.ear_threshold);
        let emotion = emotions.get(det.face_id.as_str()).copied().unwrap_or_else(|| {
            warn!(face = %det.face_id, "no emotion label; using neutral");
            crate::model::Emotion::Neutral
        });
        out.push(FaceRecord {
            face_id: det.face_id.clone(),
            frame_id: det.frame_id,
            expanded_bbox: expand_bbox(&bbox, geo.width, geo.height, cfg.expand_factor),
            area_fraction: bbox.area() as f64 / (f64::from(geo.width) * f64::from(geo.height)),
            bbox,
            landmarks: lm,
            ear_left,
            ear_right,
            eyes_closed: state.closed,
            eye_state_unknown: state.unknown,
            emotion,
            cluster_id: NOISE,
            attributes: det.attributes.clone(),
        });
    }
    out.sort_by(|a, b| a.frame_id.cmp(&b.frame_id).then_with(|| a.face_id.cmp(&b.face_id)));
    out
}
