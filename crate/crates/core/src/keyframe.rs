//! Downsampling: per-frame quality metrics, low-quality filtering, shot
//! boundaries, subshot segmentation and stillness-based keyframes.

use std::collections::BTreeSet;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::config::DownsampleConfig;
use crate::error::{Error, Result};
use crate::model::FrameMetrics;

const LUMA: [f64; 3] = [0.2126, 0.7152, 0.0722];

pub const RGB_BINS_PER_CHANNEL: usize = 16;
const HSV_BINS: (usize, usize, usize) = (8, 3, 3);

fn luma(p: &image::Rgb<u8>) -> f64 {
    LUMA[0] * f64::from(p.0[0]) + LUMA[1] * f64::from(p.0[1]) + LUMA[2] * f64::from(p.0[2])
}

/// Grayscale plane using the luminance weights.
pub fn gray_plane(img: &RgbImage) -> Vec<f64> {
    img.pixels().map(luma).collect()
}

/// Quality metrics of one letterbox-free frame.
///
/// `top_fraction` is the share of most-populated histogram bins whose
/// pixel count makes up the uniformity value.
pub fn compute_frame_metrics(img: &RgbImage, previous: Option<&RgbImage>, top_fraction: f64) -> Result<FrameMetrics> {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Domain("empty image".into()));
    }
    let gray = gray_plane(img);
    let n = gray.len() as f64;
    let luminance = gray.iter().sum::<f64>() / n;
    let sharpness = mean_gradient_magnitude(&gray, w as usize, h as usize);
    let uniformity = uniformity(&gray, top_fraction);
    let stillness = match previous {
        None => 1.0,
        Some(prev) => {
            if prev.dimensions() != img.dimensions() {
                return Err(Error::Domain(format!(
                    "previous frame is {:?}, current is {:?}",
                    prev.dimensions(),
                    img.dimensions()
                )));
            }
            let ssd: f64 = prev
                .pixels()
                .map(luma)
                .zip(&gray)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            1.0 / (1.0 + ssd / n)
        }
    };
    Ok(FrameMetrics {
        luminance,
        sharpness,
        uniformity,
        stillness,
    })
}

/// Mean of `sqrt(dx² + dy²)` with central differences; border pixels use
/// one-sided differences.
fn mean_gradient_magnitude(gray: &[f64], w: usize, h: usize) -> f64 {
    let at = |x: usize, y: usize| gray[y * w + x];
    let diff = |lo: f64, hi: f64, span: usize| if span == 0 { 0.0 } else { (hi - lo) / span as f64 };
    let mut total = 0.0;
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let dx = diff(at(x0, y), at(x1, y), x1 - x0);
            let dy = diff(at(x, y0), at(x, y1), y1 - y0);
            total += dx.hypot(dy);
        }
    }
    total / (w * h) as f64
}

/// Fraction of pixels in the `ceil(top_fraction · 256)` most-populated
/// bins of the 256-bin grayscale histogram.
fn uniformity(gray: &[f64], top_fraction: f64) -> f64 {
    let mut hist = [0u64; 256];
    for &g in gray {
        hist[g.round().clamp(0.0, 255.0) as usize] += 1;
    }
    hist.sort_unstable_by(|a, b| b.cmp(a));
    let take = ((top_fraction * 256.0).ceil() as usize).clamp(1, 256);
    hist[..take].iter().sum::<u64>() as f64 / gray.len() as f64
}

/// Ids of frames passing the darkness, blur and uniformity thresholds.
pub fn filter_low_quality(frames: &[(u64, FrameMetrics)], cfg: &DownsampleConfig) -> Result<Vec<u64>> {
    cfg.validate()?;
    Ok(frames
        .iter()
        .filter(|(_, m)| {
            m.luminance >= cfg.min_luminance
                && m.sharpness >= cfg.min_sharpness
                && m.uniformity <= cfg.max_uniformity
        })
        .map(|(id, _)| *id)
        .collect())
}

/// Normalized joint RGB histogram with 16 bins per channel.
pub fn rgb_histogram(img: &RgbImage) -> Vec<f32> {
    let b = RGB_BINS_PER_CHANNEL;
    let mut hist = vec![0u32; b * b * b];
    for p in img.pixels() {
        let [r, g, bl] = p.0;
        let idx = (r as usize * b / 256) * b * b + (g as usize * b / 256) * b + bl as usize * b / 256;
        hist[idx] += 1;
    }
    normalize_counts(&hist)
}

/// Normalized coarse HSV histogram (8 hue × 3 saturation × 3 value bins).
pub fn hsv_histogram(img: &RgbImage) -> Vec<f32> {
    let (hb, sb, vb) = HSV_BINS;
    let mut hist = vec![0u32; hb * sb * vb];
    for p in img.pixels() {
        let [r, g, b] = p.0.map(|c| f64::from(c) / 255.0);
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let delta = max - min;
        let hue = if delta == 0.0 {
            0.0
        } else if max == r {
            60.0 * ((g - b) / delta).rem_euclid(6.0)
        } else if max == g {
            60.0 * ((b - r) / delta + 2.0)
        } else {
            60.0 * ((r - g) / delta + 4.0)
        };
        let sat = if max == 0.0 { 0.0 } else { delta / max };
        let hi = ((hue / 360.0 * hb as f64) as usize).min(hb - 1);
        let si = ((sat * sb as f64) as usize).min(sb - 1);
        let vi = ((max * vb as f64) as usize).min(vb - 1);
        hist[(hi * sb + si) * vb + vi] += 1;
    }
    normalize_counts(&hist)
}

fn normalize_counts(hist: &[u32]) -> Vec<f32> {
    let total: u64 = hist.iter().map(|&c| u64::from(c)).sum();
    let total = total.max(1) as f64;
    hist.iter().map(|&c| (f64::from(c) / total) as f32).collect()
}

/// `1 − Σ min(a, b)` for two normalized histograms.
pub fn histogram_intersection_distance(a: &[f32], b: &[f32]) -> f64 {
    let inter: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x.min(y)))
        .sum();
    (1.0 - inter).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub shot_id: u64,
    pub first_id: u64,
    pub last_id: u64,
    /// Member frames in order (the surviving frames between the bounds).
    pub frames: Vec<u64>,
    /// Histogram distance at the boundary opening this shot; 0 for the first.
    pub boundary_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotDetection {
    pub shots: Vec<Shot>,
    /// Frames adjacent to a boundary; not eligible as keyframes.
    pub transitions: BTreeSet<u64>,
}

/// Adaptive-threshold shot boundary detection over ordered frames.
///
/// A boundary opens at frame `i` when its histogram distance to frame
/// `i − 1` exceeds `mean + k·std` of the preceding window of distances and
/// the absolute floor, and both resulting shots keep at least
/// `min_shot_len` frames.
pub fn detect_shots(frames: &[(u64, Vec<f32>)], cfg: &DownsampleConfig) -> ShotDetection {
    if frames.is_empty() {
        return ShotDetection {
            shots: Vec::new(),
            transitions: BTreeSet::new(),
        };
    }
    let n = frames.len();
    let distances: Vec<f64> = (1..n)
        .map(|i| histogram_intersection_distance(&frames[i - 1].1, &frames[i].1))
        .collect();

    let mut boundaries: Vec<(usize, f64)> = Vec::new();
    let mut last_start = 0usize;
    for i in 1..n {
        let d = distances[i - 1];
        let lo = (i - 1).saturating_sub(cfg.shot_window);
        let window = &distances[lo..i - 1];
        let (mean, std) = mean_std(window);
        let is_cut = d > cfg.shot_min_distance && d > mean + cfg.shot_threshold_k * std;
        if is_cut && i - last_start >= cfg.min_shot_len && n - i >= cfg.min_shot_len {
            boundaries.push((i, d));
            last_start = i;
        }
    }

    let mut transitions = BTreeSet::new();
    for &(b, _) in &boundaries {
        let lo = b.saturating_sub(cfg.transition_radius);
        let hi = (b + cfg.transition_radius).min(n);
        // frames b-1 and b sit on either side of the cut
        for idx in lo..hi {
            transitions.insert(frames[idx].0);
        }
    }

    let mut shots = Vec::with_capacity(boundaries.len() + 1);
    let mut starts: Vec<(usize, f64)> = vec![(0, 0.0)];
    starts.extend(boundaries);
    for (k, &(start, conf)) in starts.iter().enumerate() {
        let end = starts.get(k + 1).map_or(n, |s| s.0);
        let ids: Vec<u64> = frames[start..end].iter().map(|f| f.0).collect();
        shots.push(Shot {
            shot_id: k as u64,
            first_id: ids[0],
            last_id: *ids.last().expect("non-empty shot"),
            frames: ids,
            boundary_confidence: conf,
        });
    }
    ShotDetection { shots, transitions }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subshot {
    pub subshot_id: u64,
    pub shot_id: u64,
    pub members: Vec<u64>,
    pub keyframe: u64,
}

/// Per-frame inputs to subshot segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct SubshotInput {
    pub frame_id: u64,
    pub hsv: Vec<f32>,
    pub stillness: f64,
    pub transition: bool,
}

/// Split a shot into visually homogeneous runs and pick the stillest frame
/// of each. `first_id` numbers the returned subshots.
pub fn segment_subshots(shot_id: u64, frames: &[SubshotInput], first_id: u64, cfg: &DownsampleConfig) -> Result<Vec<Subshot>> {
    if frames.is_empty() {
        return Err(Error::Domain(format!("shot {shot_id} has no surviving frames")));
    }
    let k = frames.len().div_ceil(cfg.target_subshot_len).max(1);
    let points: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| f.hsv.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let labels = kmeans(&points, k, cfg.kmeans_seed ^ shot_id, cfg.kmeans_max_iter);

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..=frames.len() {
        if i == frames.len() || labels[i] != labels[start] {
            runs.push((start, i));
            start = i;
        }
    }
    merge_runs(&mut runs, &points, k);

    Ok(runs
        .iter()
        .enumerate()
        .map(|(j, &(s, e))| {
            let members = &frames[s..e];
            let eligible: Vec<&SubshotInput> = members.iter().filter(|f| !f.transition).collect();
            let pool: Vec<&SubshotInput> = if eligible.is_empty() {
                members.iter().collect()
            } else {
                eligible
            };
            let mut best = pool[0];
            for f in &pool[1..] {
                if f.stillness > best.stillness {
                    best = f;
                }
            }
            Subshot {
                subshot_id: first_id + j as u64,
                shot_id,
                members: members.iter().map(|f| f.frame_id).collect(),
                keyframe: best.frame_id,
            }
        })
        .collect())
}

/// Merge the smallest run into its more similar neighbour until at most
/// `k` runs remain.
fn merge_runs(runs: &mut Vec<(usize, usize)>, points: &[Vec<f64>], k: usize) {
    let mean = |&(s, e): &(usize, usize)| -> Vec<f64> {
        let d = points[0].len();
        let mut m = vec![0.0; d];
        for p in &points[s..e] {
            for (acc, v) in m.iter_mut().zip(p) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= (e - s) as f64);
        m
    };
    let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    while runs.len() > k {
        let (idx, _) = runs
            .iter()
            .enumerate()
            .min_by_key(|(_, r)| r.1 - r.0)
            .expect("runs non-empty");
        let target = if idx == 0 {
            1
        } else if idx == runs.len() - 1 {
            idx - 1
        } else {
            let m = mean(&runs[idx]);
            let left = l1(&m, &mean(&runs[idx - 1]));
            let right = l1(&m, &mean(&runs[idx + 1]));
            if left <= right {
                idx - 1
            } else {
                idx + 1
            }
        };
        let (lo, hi) = (idx.min(target), idx.max(target));
        runs[lo] = (runs[lo].0, runs[hi].1);
        runs.remove(hi);
    }
}

/// Lloyd's k-means with farthest-point seeding from a seeded first centre.
/// Ties in assignment go to the lower cluster index.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let k = k.clamp(1, n);
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let mut far = 0;
        for i in 1..n {
            if nearest[i] > nearest[far] {
                far = i;
            }
        }
        if nearest[far] == 0.0 {
            // fewer distinct points than k
            break;
        }
        centers.push(points[far].clone());
        let c = centers.last().expect("just pushed");
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(dist2(p, c));
        }
    }

    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (j, c) in centers.iter().enumerate() {
                    let d = dist2(p, c);
                    if d < best_d {
                        best = j;
                        best_d = d;
                    }
                }
                best
            })
            .collect()
    };

    let mut labels = assign(&centers);
    let mut converged = false;
    for _ in 0..max_iter {
        let d = points[0].len();
        let mut sums = vec![vec![0.0; d]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (j, c) in centers.iter_mut().enumerate() {
            if counts[j] > 0 {
                *c = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        let next = assign(&centers);
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    if !converged {
        warn!(k, n, max_iter, "k-means did not converge; keeping current assignment");
    }
    labels
}

/// Per-frame features computed from decoded images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub frame_id: u64,
    pub metrics: FrameMetrics,
    pub rgb_hist: Vec<f32>,
    pub hsv_hist: Vec<f32>,
}

pub fn compute_features(frame_id: u64, img: &RgbImage, previous: Option<&RgbImage>, cfg: &DownsampleConfig) -> Result<FrameFeatures> {
    Ok(FrameFeatures {
        frame_id,
        metrics: compute_frame_metrics(img, previous, cfg.uniformity_top_fraction)?,
        rgb_hist: rgb_histogram(img),
        hsv_hist: hsv_histogram(img),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownsampleResult {
    pub metrics: Vec<(u64, FrameMetrics)>,
    pub kept: Vec<u64>,
    pub shots: Vec<Shot>,
    pub transitions: BTreeSet<u64>,
    pub subshots: Vec<Subshot>,
    /// Keyframes in temporal order.
    pub keyframes: Vec<u64>,
}

impl DownsampleResult {
    pub fn shot_of(&self, frame_id: u64) -> Option<u64> {
        self.shots
            .iter()
            .find(|s| s.frames.contains(&frame_id))
            .map(|s| s.shot_id)
    }
}

/// Run filtering, shot detection and subshot segmentation over features
/// ordered by time.
pub fn downsample(features: &[FrameFeatures], cfg: &DownsampleConfig) -> Result<DownsampleResult> {
    let metrics: Vec<(u64, FrameMetrics)> = features.iter().map(|f| (f.frame_id, f.metrics)).collect();
    let kept = filter_low_quality(&metrics, cfg)?;
    let kept_set: BTreeSet<u64> = kept.iter().copied().collect();
    let surviving: Vec<&FrameFeatures> = features
        .iter()
        .filter(|f| kept_set.contains(&f.frame_id))
        .collect();
    let detection = detect_shots(
        &surviving
            .iter()
            .map(|f| (f.frame_id, f.rgb_hist.clone()))
            .collect::<Vec<_>>(),
        cfg,
    );
    let by_id: std::collections::HashMap<u64, &FrameFeatures> =
        surviving.iter().map(|f| (f.frame_id, *f)).collect();
    let mut subshots = Vec::new();
    for shot in &detection.shots {
        let inputs: Vec<SubshotInput> = shot
            .frames
            .iter()
            .map(|id| {
                let f = by_id[id];
                SubshotInput {
                    frame_id: *id,
                    hsv: f.hsv_hist.clone(),
                    stillness: f.metrics.stillness,
                    transition: detection.transitions.contains(id),
                }
            })
            .collect();
        let next = subshots.len() as u64;
        subshots.extend(segment_subshots(shot.shot_id, &inputs, next, cfg)?);
    }
    let keyframes = subshots.iter().map(|s| s.keyframe).collect();
    Ok(DownsampleResult {
        metrics,
        kept,
        shots: detection.shots,
        transitions: detection.transitions,
        subshots,
        keyframes,
    })
}
