//! Deterministic synthetic dataset bundles with planted structure.
//!
//! The generator writes a complete bundle — frames, embeddings, faces,
//! landmarks, emotions, shot scales, saliency maps and a logo prior — and
//! returns the ground truth it planted, so pipelines can be exercised and
//! checked without any model inference.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::ingest::{
    save_pgm_grid, write_jsonl, write_tensor_file, DatasetBundle, EmotionRecord, FaceDetection,
    FrameIndexEntry, LandmarkRecord, NamedMatrix, ShotScaleRecord,
};
use crate::model::{Emotion, Grid, LandmarkScheme, Rect, ShotScale};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub video_id: String,
    pub frames: u64,
    pub width: u32,
    pub height: u32,
    pub shots: usize,
    /// Black rows added above and below the picture.
    pub letterbox: u32,
    pub dim: usize,
    pub fps: f64,
    pub seed: u64,
    pub keywords: Vec<String>,
    /// Leading frames of this shot are faded to black.
    pub dark_shot: Option<usize>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            video_id: "synthetic".into(),
            frames: 500,
            width: 320,
            height: 180,
            shots: 10,
            letterbox: 20,
            dim: 32,
            fps: 24.0,
            seed: 7,
            keywords: vec!["harbour".into(), "forest".into(), "night".into()],
            dark_shot: Some(6),
        }
    }
}

/// What the generator planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    /// First frame of every shot, plus the end sentinel.
    pub shot_bounds: Vec<u64>,
    /// Scene (embedding cluster) of every shot.
    pub shot_scene: Vec<usize>,
    pub letterbox_top: u32,
    pub letterbox_bottom: u32,
    /// Identity of every face id.
    pub identity: BTreeMap<String, usize>,
    pub closed_eyes: Vec<String>,
    /// Frames too dark to survive filtering.
    pub dark_frames: Vec<u64>,
}

impl SyntheticTruth {
    pub fn shot_of(&self, frame_id: u64) -> usize {
        self.shot_bounds.partition_point(|&b| b <= frame_id) - 1
    }

    /// Shots that should end up in one redundancy group: runs of
    /// consecutive shots showing the same scene.
    pub fn shot_groups(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        for (s, scene) in self.shot_scene.iter().enumerate() {
            match out.last_mut() {
                Some(g) if self.shot_scene[*g.last().unwrap()] == *scene => g.push(s),
                _ => out.push(vec![s]),
            }
        }
        out
    }
}

/// Engine settings suited to the small synthetic videos: face clustering
/// needs far fewer points than a feature film provides.
pub fn recommended_config() -> EngineConfig {
    let mut cfg = EngineConfig::default();
    cfg.face_cluster.min_pts = 5;
    cfg
}

struct ShotPlan {
    color: [f64; 3],
    scene: usize,
    /// (identity, emotion, centre x fraction, box side)
    faces: Vec<(usize, Emotion, f64, u32)>,
    closed_from: Option<f64>,
    scale: ShotScale,
}

fn plans(shots: usize) -> Vec<ShotPlan> {
    // Scenes: shots 1 and 2 share one, shot 0 and 7 share another.
    let scenes = [0, 1, 1, 2, 3, 4, 5, 0, 6, 7];
    let mut out = Vec::with_capacity(shots);
    for s in 0..shots {
        let hue = (s as f64 * 0.37).fract();
        let color = hsv_to_rgb(hue, 0.55, 0.75);
        let (faces, scale, closed_from) = match s % 10 {
            1 | 2 => (vec![(0, Emotion::Happiness, 0.5, 56)], ShotScale::CloseUp, None),
            4 => (vec![(1, Emotion::Fear, 0.5, 56)], ShotScale::CloseUp, None),
            5 => (vec![(1, Emotion::Fear, 0.45, 56)], ShotScale::CloseUp, Some(0.5)),
            7 => (
                vec![(0, Emotion::Neutral, 0.3, 50), (1, Emotion::Neutral, 0.7, 50)],
                ShotScale::Medium,
                None,
            ),
            9 => (vec![(1, Emotion::Happiness, 0.55, 56)], ShotScale::CloseUp, None),
            _ => (Vec::new(), ShotScale::Long, None),
        };
        out.push(ShotPlan {
            color,
            scene: scenes[s % 10] + 8 * (s / 10),
            faces,
            closed_from,
            scale,
        });
    }
    out
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    let (r, g, b) = match i as i64 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r * 255.0, g * 255.0, b * 255.0]
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("valid normal");
    unit((0..dim).map(|_| n.sample(rng)).collect())
}

fn jitter(rng: &mut ChaCha8Rng, centre: &[f64], sigma: f64) -> Vec<f32> {
    let n = Normal::new(0.0, sigma).expect("valid normal");
    unit(centre.iter().map(|c| c + n.sample(rng)).collect())
        .into_iter()
        .map(|v| v as f32)
        .collect()
}

/// Scene embeddings share a common direction and sit on alternating sides
/// of one dominant axis, so consecutive distinct scenes stay apart after a
/// low-variance projection; a smaller scene-specific part keeps every scene
/// distinguishable by cosine.
fn scene_centres(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let base = random_unit(rng, dim);
    let axis = orthogonalize(random_unit(rng, dim), &[&base]);
    (0..count)
        .map(|s| {
            let side = if SCENE_SIDE[s % SCENE_SIDE.len()] { 1.0 } else { -1.0 };
            let own = orthogonalize(random_unit(rng, dim), &[&base, &axis]);
            unit((0..dim).map(|i| base[i] + side * axis[i] + 0.3 * own[i]).collect())
        })
        .collect()
}

// Consecutive distinct scenes in the shot plan alternate sides.
const SCENE_SIDE: [bool; 8] = [false, true, false, true, false, true, true, false];

fn orthogonalize(mut v: Vec<f64>, against: &[&Vec<f64>]) -> Vec<f64> {
    for a in against {
        let d: f64 = v.iter().zip(a.iter()).map(|(x, y)| x * y).sum();
        for (x, y) in v.iter_mut().zip(a.iter()) {
            *x -= d * y;
        }
    }
    unit(v)
}

fn shot_bounds(rng: &mut ChaCha8Rng, frames: u64, shots: usize) -> Result<Vec<u64>> {
    let shots = shots as u64;
    if shots == 0 || frames < shots * 8 {
        return Err(Error::Config(format!(
            "{frames} frames cannot hold {shots} shots of at least 8 frames"
        )));
    }
    let base = frames / shots;
    let spread = (base / 5).max(1);
    let mut bounds = vec![0];
    for s in 1..shots {
        let jitter = rng.random_range(0..=2 * spread) as i64 - spread as i64;
        let b = (s * base) as i64 + jitter;
        bounds.push(b.max(*bounds.last().unwrap() as i64 + 8) as u64);
    }
    bounds.push(frames);
    Ok(bounds)
}

fn eye(cx: f64, cy: f64, width: f64, ear: f64) -> Vec<[f64; 2]> {
    let o = ear * width / 2.0;
    let (h, s) = (width / 2.0, width / 6.0);
    vec![
        [cx - h, cy],
        [cx - s, cy - o],
        [cx + s, cy - o],
        [cx + h, cy],
        [cx + s, cy + o],
        [cx - s, cy + o],
    ]
}

fn gaussian_grid(w: usize, h: usize, cx: f64, cy: f64, sigma: f64, floor: f64) -> Grid {
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
            data.push(floor + (1.0 - floor) * (-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    Grid { width: w, height: h, data }
}

/// Write a synthetic bundle to `root` and return its ground truth.
pub fn generate(root: &Path, spec: &SyntheticSpec) -> Result<SyntheticTruth> {
    let bundle = DatasetBundle::at(root);
    for dir in [bundle.frames_dir(), bundle.artifacts_dir().join("saliency")] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bounds = shot_bounds(&mut rng, spec.frames, spec.shots)?;
    let plans = plans(spec.shots);
    let (w, h, bar) = (spec.width, spec.height, spec.letterbox);
    if 2 * bar + 64 > h {
        return Err(Error::Config("letterbox leaves too little picture".into()));
    }
    let content_h = h - 2 * bar;

    let scene_count = plans.iter().map(|p| p.scene).max().unwrap_or(0) + 1;
    let scenes = scene_centres(&mut rng, scene_count, spec.dim);
    let identities: Vec<Vec<f64>> = (0..2).map(|_| random_unit(&mut rng, spec.dim)).collect();
    let textures: Vec<Vec<f64>> = (0..spec.shots)
        .map(|_| {
            let n = Normal::new(0.0, 28.0).expect("valid normal");
            (0..(w * content_h) as usize).map(|_| n.sample(&mut rng)).collect()
        })
        .collect();
    let pixel_noise = Normal::new(0.0, 2.0).expect("valid normal");

    let mut index = Vec::new();
    let mut frame_rows = Vec::new();
    let mut crop_rows = Vec::new();
    let mut face_rows = Vec::new();
    let mut detections = Vec::new();
    let mut landmarks = Vec::new();
    let mut emotions = Vec::new();
    let mut scales = Vec::new();
    let mut truth = SyntheticTruth {
        shot_bounds: bounds.clone(),
        shot_scene: plans.iter().map(|p| p.scene).collect(),
        letterbox_top: bar,
        letterbox_bottom: bar,
        identity: BTreeMap::new(),
        closed_eyes: Vec::new(),
        dark_frames: Vec::new(),
    };
    let (sal_w, sal_h) = (80usize, (80 * h / w) as usize);
    let scale_labels = [ShotScale::Long, ShotScale::Medium, ShotScale::CloseUp];

    for s in 0..spec.shots {
        let plan = &plans[s];
        let (first, end) = (bounds[s], bounds[s + 1]);
        let len = (end - first) as f64;
        let focus = (rng.random_range(0.25..0.75), rng.random_range(0.3..0.7));
        for f in first..end {
            let t = (f - first) as f64 / len.max(1.0);
            let dark = spec.dark_shot == Some(s) && f - first < 3;
            if dark {
                truth.dark_frames.push(f);
            }
            // picture
            let drift = 1.0 + 0.25 * (t - 0.5);
            let mut img = RgbImage::new(w, h);
            let tex = &textures[s];
            for y in 0..content_h {
                for x in 0..w {
                    let n = tex[(y * w + x) as usize] + pixel_noise.sample(&mut rng);
                    let px: [u8; 3] = std::array::from_fn(|c| {
                        let v = if dark { 4.0 } else { plan.color[c] * drift + n };
                        v.clamp(24.0, 255.0) as u8
                    });
                    img.put_pixel(x, y + bar, Rgb(if dark { [3, 3, 3] } else { px }));
                }
            }
            // faces
            let mut boxes = Vec::new();
            for (n, &(ident, emotion, fx, side)) in plan.faces.iter().enumerate() {
                let face_id = format!("f{f:04}_{n}");
                let cx = (fx * w as f64) as i64 + ((t - 0.5) * 8.0) as i64;
                let cy = i64::from(bar) + i64::from(content_h) * 2 / 5;
                let side = i64::from(side);
                let bbox = Rect::new(cx - side / 2, cy - side / 2, side, side);
                if !dark {
                    for y in bbox.y..bbox.bottom() {
                        for x in bbox.x..bbox.right() {
                            img.put_pixel(x as u32, y as u32, Rgb([224, 172, 140]));
                        }
                    }
                }
                let closed = plan.closed_from.is_some_and(|c| t >= c);
                let ear = if closed { 0.08 } else { 0.32 };
                let ey = bbox.y as f64 + 0.4 * side as f64;
                let ew = 0.2 * side as f64;
                landmarks.push(LandmarkRecord {
                    face_id: face_id.clone(),
                    frame_id: f,
                    scheme: LandmarkScheme::SixPoint,
                    left: Some(eye(bbox.x as f64 + 0.3 * side as f64, ey, ew, ear)),
                    right: Some(eye(bbox.x as f64 + 0.7 * side as f64, ey, ew, ear)),
                });
                detections.push(FaceDetection {
                    face_id: face_id.clone(),
                    frame_id: f,
                    bbox,
                    attributes: BTreeMap::new(),
                });
                emotions.push(EmotionRecord {
                    face_id: face_id.clone(),
                    emotion,
                });
                for a in 0..3 {
                    let id = if a == 0 { face_id.clone() } else { format!("{face_id}#{a}") };
                    face_rows.push((id, jitter(&mut rng, &identities[ident], 0.03)));
                }
                truth.identity.insert(face_id.clone(), ident);
                if closed {
                    truth.closed_eyes.push(face_id);
                }
                boxes.push(bbox);
            }
            let file = format!("frame_{f}.png");
            let path = bundle.frames_dir().join(&file);
            img.save(&path)?;
            index.push(FrameIndexEntry {
                frame_id: f,
                timestamp_s: f as f64 / spec.fps,
                file,
            });

            // embeddings
            let emb = jitter(&mut rng, &scenes[plan.scene], 0.02);
            let centre: Vec<f64> = emb.iter().map(|&v| f64::from(v)).collect();
            for aspect in ["16:9", "2:3"] {
                crop_rows.push((format!("{f}:{aspect}"), jitter(&mut rng, &centre, 0.01)));
            }
            frame_rows.push((f.to_string(), emb));

            // shot scale, with occasional classifier slips
            let label = if rng.random_bool(0.1) {
                scale_labels[rng.random_range(0..3)]
            } else {
                plan.scale
            };
            scales.push(ShotScaleRecord { frame_id: f, label });

            // saliency: peaks on the faces, else on a per-shot focus point
            let sx = sal_w as f64 / f64::from(w);
            let sy = sal_h as f64 / f64::from(h);
            let mut grid = match boxes.first() {
                Some(b) => {
                    let c = b.center();
                    gaussian_grid(sal_w, sal_h, c.x * sx, c.y * sy, 6.0, 0.02)
                }
                None => gaussian_grid(
                    sal_w,
                    sal_h,
                    focus.0 * sal_w as f64,
                    (f64::from(bar) + focus.1 * f64::from(content_h)) * sy,
                    9.0,
                    0.02,
                ),
            };
            for b in boxes.iter().skip(1) {
                let c = b.center();
                let extra = gaussian_grid(sal_w, sal_h, c.x * sx, c.y * sy, 6.0, 0.0);
                for (v, e) in grid.data.iter_mut().zip(extra.data) {
                    *v = v.max(e);
                }
            }
            let bar_rows = (f64::from(bar) * sy).floor() as usize;
            for y in (0..bar_rows).chain(sal_h - bar_rows..sal_h) {
                grid.data[y * sal_w..(y + 1) * sal_w].fill(0.0);
            }
            save_pgm_grid(&bundle.saliency_path(f), &grid)?;
        }
    }

    let dim = spec.dim;
    let matrix = |rows: Vec<(String, Vec<f32>)>| NamedMatrix::from_rows(rows, dim);
    write_tensor_file(&bundle.artifact("frame_embeddings.fpk"), &matrix(frame_rows)?)?;
    write_tensor_file(&bundle.artifact("crop_embeddings.fpk"), &matrix(crop_rows)?)?;
    write_tensor_file(&bundle.artifact("face_embeddings.fpk"), &matrix(face_rows)?)?;
    let keyword_rows = spec
        .keywords
        .iter()
        .enumerate()
        .map(|(i, k)| (k.clone(), jitter(&mut rng, &scenes[(2 * i) % scene_count], 0.05)))
        .collect();
    write_tensor_file(&bundle.artifact("keyword_embeddings.fpk"), &matrix(keyword_rows)?)?;
    let mut prompt = |name: &str| {
        let v = random_unit(&mut rng, dim);
        (name.to_string(), v.into_iter().map(|x| x as f32).collect::<Vec<f32>>())
    };
    let prompts = vec![prompt("good"), prompt("bad")];
    write_tensor_file(&bundle.artifact("prompt_embeddings.fpk"), &matrix(prompts)?)?;

    write_jsonl(&bundle.frames_index_path(), &index)?;
    write_jsonl(&bundle.artifact("faces.jsonl"), &detections)?;
    write_jsonl(&bundle.artifact("landmarks.jsonl"), &landmarks)?;
    write_jsonl(&bundle.artifact("emotions.jsonl"), &emotions)?;
    write_jsonl(&bundle.artifact("shot_scale.jsonl"), &scales)?;

    // Logo prior: a lower-third band and a top-left corner.
    let (lw, lh) = (64usize, 36usize);
    let mut logo = Grid::filled(lw, lh, 0.02);
    for y in 0..lh {
        for x in 0..lw {
            if (24..32).contains(&y) && (16..48).contains(&x) {
                logo.data[y * lw + x] = 0.8;
            } else if (4..10).contains(&y) && (2..16).contains(&x) {
                logo.data[y * lw + x] = 0.6;
            }
        }
    }
    save_pgm_grid(&bundle.artifact("logo_prior.pgm"), &logo)?;

    let manifest = serde_json::json!({
        "video_id": spec.video_id,
        "fps": spec.fps,
        "frame_count": spec.frames,
        "duration_s": spec.frames as f64 / spec.fps,
        "title": "Harbour Lights",
        "summary": "Two friends return to a fishing harbour and walk into the forest at night.",
        "keywords": spec.keywords,
        "embedding_dim": spec.dim,
    });
    let path = bundle.manifest_path();
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(truth)
}
