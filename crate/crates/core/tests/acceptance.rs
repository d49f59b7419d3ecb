//! Acceptance run: one PASS/FAIL line per engine criterion.
//!
//! Built with `harness = false` so the report is always printed. The
//! process exits non-zero when a criterion fails for a reason that is not a
//! known, documented conflict between a fixture and its formula.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::fixtures::{dataset, raw, Spec};
use common::*;
use framepick::config::{
    AspectTag, CropConfig, FaceClusterConfig, FacePositionTable, GroupingConfig, SelectionConfig, WeightConfig,
};
use framepick::cropper::{detect_letterbox, filter_crops, generate_crop_candidates, CropCandidate, FaceBox, RejectReason};
use framepick::dataset::{DATASET_FILE, EMBEDDINGS_FILE, PROPOSALS_FILE};
use framepick::faceproc::{classify_eyes, compute_ear};
use framepick::grouping::{
    cluster_faces, clustering_score, dbscan, group_keyframes, FacePoint, KeyframeEmbedding, Metric, PcaDecomposition,
};
use framepick::ingest::DatasetBundle;
use framepick::keyframe::compute_frame_metrics;
use framepick::model::{Emotion, EyePoints, LandmarkScheme, Point, Rect};
use framepick::pipeline::{Pipeline, PipelineRun, Stage, StageStatus, SCORES_FILE};
use framepick::scoring::{face_position_score, score_candidates, RawScores, ScoreVector};
use framepick::selection::{corpus_report, evaluate_against_reference, search, MatchTier, SearchQuery};
use framepick::synthetic::{generate, recommended_config, SyntheticSpec};
use image::{Rgb, RgbImage};
use rand::Rng;

/// Result of one criterion.
#[derive(Default)]
struct Outcome {
    failures: Vec<String>,
    /// Failing sub-checks whose expected value contradicts the formula it
    /// is meant to exercise; reported but not fatal.
    conflicts: Vec<String>,
    notes: Vec<String>,
}

impl Outcome {
    fn expect(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn close(&mut self, name: &str, got: f64, want: f64, tol: f64) {
        self.expect((got - want).abs() <= tol, || format!("{name}: got {got}, want {want} ± {tol:e}"));
    }

    fn within(&mut self, name: &str, took: Duration, budget: Duration) {
        self.notes.push(format!("{name} {:.2?}", took));
        self.expect(took < budget, || format!("{name} took {took:.2?}, budget {budget:?}"));
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("formula unit suite", formula_suite),
        ("oracle equivalence", oracle_equivalence),
        ("planted-structure recovery", planted_structure),
        ("pipeline determinism and caching", pipeline_determinism),
        ("ranking invariances", ranking_invariances),
        ("cropper suite", cropper_suite),
        ("reference-match tooling", reference_tooling),
    ];
    let mut fatal = 0;
    for (name, run) in criteria {
        let out = run();
        let ok = out.failures.is_empty() && out.conflicts.is_empty();
        let notes = if out.notes.is_empty() { String::new() } else { format!(" ({})", out.notes.join(", ")) };
        println!("{} {name}{notes}", if ok { "PASS" } else { "FAIL" });
        for f in &out.failures {
            println!("    failed: {f}");
        }
        for c in &out.conflicts {
            println!("    conflict: {c}");
        }
        fatal += out.failures.len();
    }
    println!("service contract: run by the framepick-server acceptance target");
    if fatal == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------- formulas

fn solid(c: [u8; 3]) -> RgbImage {
    RgbImage::from_pixel(8, 8, Rgb(c))
}

fn formula_suite() -> Outcome {
    let mut o = Outcome::default();
    let t = Instant::now();

    for (name, colour, want) in [
        ("red", [255, 0, 0], 54.213),
        ("green", [0, 255, 0], 182.376),
        ("blue", [0, 0, 255], 18.411),
        ("white", [255, 255, 255], 255.0),
        ("black", [0, 0, 0], 0.0),
    ] {
        let m = compute_frame_metrics(&solid(colour), None, 0.25).unwrap();
        o.close(&format!("{name} luminance"), m.luminance, want, 1e-6);
    }

    let p = |x: f64, y: f64| Point::new(x, y);
    // p1..p6 clockwise from the left corner
    let eye = EyePoints {
        contour: vec![p(0.0, 0.0), p(1.0, 1.0), p(3.0, 1.0), p(4.0, 0.0), p(3.0, -1.0), p(1.0, -1.0)],
        pupil: None,
    };
    let ear = compute_ear(&eye, LandmarkScheme::SixPoint).unwrap();
    o.expect(ear == 0.5, || format!("EAR fixture: got {ear}, want exactly 0.5"));
    let threshold = framepick::config::FaceConfig::default().ear_threshold;
    o.expect(threshold == 0.2, || format!("default EAR threshold {threshold}"));
    o.expect(classify_eyes(Some(0.19), Some(0.3), threshold).closed, || "EAR 0.19 must be closed".into());
    o.expect(!classify_eyes(Some(0.21), Some(0.3), threshold).closed, || "EAR 0.21 must be open".into());
    o.expect(!classify_eyes(Some(0.2), Some(0.2), threshold).closed, || "EAR at the threshold must be open".into());

    // clustering score
    let one = [1.0f32, 0.0, 0.0];
    let same: Vec<&[f32]> = vec![&one, &one, &one];
    let s = clustering_score(&[0, 0, 0], &same).unwrap();
    o.expect(s == 3.0, || format!("three identical vectors: got {s}, want 3.0"));

    let minus = [-1.0f32, 0.0, 0.0];
    let s = clustering_score(&[0, 0], &[&one, &minus]).unwrap();
    o.expect(s == -2.0, || format!("antipodal pair: got {s}, want -2.0"));

    // sizes 2 and 3 with minimum cosines 0.9 and 0.8, plus four noise points
    let a0 = [1.0f32, 0.0, 0.0, 0.0];
    let a1 = [0.9f32, 0.19f32.sqrt(), 0.0, 0.0];
    let b0 = [0.0f32, 0.0, 1.0, 0.0];
    let b1 = [0.0f32, 0.0, 0.8, 0.6];
    let mid = {
        let v = [0.0f32, 0.0, 1.8, 0.6];
        let n = (1.8f32 * 1.8 + 0.36).sqrt();
        [0.0, 0.0, v[2] / n, v[3] / n]
    };
    let noise = [0.5f32, 0.5, 0.5, 0.5];
    let embs: Vec<&[f32]> = vec![&a0, &a1, &b0, &b1, &mid, &noise, &noise, &noise, &noise];
    let s = clustering_score(&[0, 0, 1, 1, 1, -1, -1, -1, -1], &embs).unwrap();
    let by_formula = 2.0 * 0.9 + 3.0 * 0.8 - 4.0;
    o.close("two clusters with noise (formula value)", s, by_formula, 1e-6);
    if (s - 0.6).abs() > 1e-6 {
        o.conflicts.push(format!(
            "two clusters with noise: got {s:.6}, listed value 0.6; \
             2·0.9 + 3·0.8 − 4 = 0.2, so the listed value cannot come from the score as defined"
        ));
    }

    let table = FacePositionTable::default();
    let (w, h) = (1000u32, 600u32);
    for (name, x, y, want) in [
        ("centre cell", 0.5, 0.45, 1.0),
        ("side cell", 0.05, 0.5, 0.1),
        ("bottom cell", 0.5, 0.95, 0.25),
    ] {
        let got = face_position_score(Point::new(x * f64::from(w), y * f64::from(h)), w, h, &table);
        o.expect(got == want, || format!("face position {name}: got {got}, want {want}"));
    }

    o.within("runtime", t.elapsed(), Duration::from_secs(1));
    o
}

// ----------------------------------------------------------------- oracles

/// Random points from a few blobs plus uniform background, with an eps
/// drawn from the pairwise distance distribution so that instances range
/// from all-noise to a single cluster.
fn dbscan_instance(rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<Vec<f64>>, f64, usize) {
    let n = rng.random_range(1..=500);
    let d = rng.random_range(1..=16);
    let centres: Vec<Vec<f64>> = (0..rng.random_range(1..6))
        .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                (0..d).map(|_| rng.random_range(-6.0..6.0)).collect()
            } else {
                let c = &centres[rng.random_range(0..centres.len())];
                c.iter().map(|x| x + rng.random_range(-1.0..1.0)).collect()
            }
        })
        .collect();
    let i = rng.random_range(0..n);
    let j = rng.random_range(0..n);
    let dist = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let eps = (dist * rng.random_range(0.05..0.6)).max(1e-3);
    (pts, eps, rng.random_range(1..10))
}

fn oracle_equivalence() -> Outcome {
    let mut o = Outcome::default();
    let t = Instant::now();
    let mut rng = seeded(2024);
    let mut clusters_seen = 0usize;
    for case in 0..200 {
        let (pts, eps, min_pts) = dbscan_instance(&mut rng);
        let ours = dbscan(&pts, eps, min_pts, Metric::Euclidean).unwrap();
        let naive = naive_dbscan(&pts, eps, min_pts);
        clusters_seen += naive.iter().copied().max().map_or(0, |m| (m + 1) as usize);
        o.expect(same_partition(&ours, &naive), || {
            format!("dbscan instance {case}: n={} d={} eps={eps} min_pts={min_pts}", pts.len(), pts[0].len())
        });
    }
    o.notes.push(format!("200 dbscan instances, {clusters_seen} clusters"));

    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(3..60);
        let d = rng.random_range(1..=16);
        let rows = random_matrix(n, d, &mut rng);
        let dec = PcaDecomposition::fit(&rows).unwrap();
        let (vals, vecs) = covariance_eigen(&rows);
        let rank = dec.max_components();
        // the leading block separated from the rest by a clear eigen-gap;
        // inside a degenerate eigenspace the basis is not unique
        let k = (1..=rank)
            .rev()
            .find(|&k| k == d || (vals[k - 1] - vals[k]) > 1e-6 * vals[0])
            .unwrap();
        let angle = subspace_angle(&dec.axes[..k], &vecs[..k]);
        worst = worst.max(angle);
        o.expect(angle < 1e-6, || format!("pca matrix {case}: n={n} d={d} k={k} angle={angle:e}"));
    }
    o.notes.push(format!("100 pca matrices, max angle {worst:.1e} rad"));
    o.within("runtime", t.elapsed(), Duration::from_secs(60));
    o
}

// -------------------------------------------------------- planted structure

/// Ten shots over three scenes: A B and C sit at (1,0), (−1,0) and (0,1)
/// with a small per-keyframe offset in a third direction.
const SCRIPT: [usize; 10] = [0, 0, 1, 0, 2, 2, 1, 1, 0, 2];

fn scripted_keyframes() -> Vec<KeyframeEmbedding> {
    let scene = |s: usize| match s {
        0 => [1.0f32, 0.0],
        1 => [-1.0, 0.0],
        _ => [0.0, 1.0],
    };
    let mut out = Vec::new();
    for (shot, &s) in SCRIPT.iter().enumerate() {
        for j in 0..2u64 {
            let mut e = vec![0.0f32; 8];
            e[..2].copy_from_slice(&scene(s));
            e[2] = if j == 0 { 0.05 } else { -0.05 };
            out.push(KeyframeEmbedding {
                frame_id: shot as u64 * 10 + j,
                shot_id: shot as u64,
                embedding: e,
            });
        }
    }
    out
}

fn planted_structure() -> Outcome {
    let mut o = Outcome::default();
    let mut rng = seeded(7);
    let centres: Vec<Vec<f64>> = (0..3).map(|_| random_unit(64, &mut rng)).collect();
    let (pts, truth) = blobs(&centres, 100, 0.02, 8);
    let points: Vec<FacePoint> = pts
        .iter()
        .enumerate()
        .map(|(i, e)| FacePoint {
            face_id: format!("face-{i:04}"),
            embedding: e.clone(),
        })
        .collect();
    let cfg = FaceClusterConfig::default();
    let r = cluster_faces(&points, &cfg).unwrap();
    let pur = purity(&r.point_labels, &truth);
    o.expect(r.clusters.len() == 3, || format!("{} face clusters, want 3", r.clusters.len()));
    o.expect(pur >= 0.95, || format!("purity {pur}"));
    o.expect(r.chosen_k.abs_diff(r.base_k) <= cfg.grid_halfwidth && cfg.grid_halfwidth == 10, || {
        format!("chosen k {} outside base {} ± {}", r.chosen_k, r.base_k, cfg.grid_halfwidth)
    });
    o.notes.push(format!("purity {pur:.3}, base k {}, chosen k {}", r.base_k, r.chosen_k));

    // adjacent shots of one scene merge; a scene that returns after another
    // shot does not
    let want: Vec<Vec<u64>> = vec![
        vec![0, 1, 10, 11],
        vec![20, 21],
        vec![30, 31],
        vec![40, 41, 50, 51],
        vec![60, 61, 70, 71],
        vec![80, 81],
        vec![90, 91],
    ];
    let g = group_keyframes(&scripted_keyframes(), &GroupingConfig::default()).unwrap();
    let got: Vec<Vec<u64>> = g.groups.iter().map(|g| g.members.clone()).collect();
    o.expect(got == want, || format!("10-shot grouping {got:?}, want {want:?}"));
    o
}

// ---------------------------------------------------------------- pipeline

const OUTPUTS: [&str; 4] = [DATASET_FILE, PROPOSALS_FILE, EMBEDDINGS_FILE, SCORES_FILE];

fn timed_run(root: &Path, workers: usize) -> Result<(PipelineRun, Duration), String> {
    let mut cfg = recommended_config();
    cfg.pipeline.workers = workers;
    let p = Pipeline::new(DatasetBundle::open(root).map_err(|e| e.to_string())?, cfg).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let r = p.run().map_err(|e| e.to_string())?;
    Ok((r, t.elapsed()))
}

fn outputs(root: &Path) -> BTreeMap<&'static str, Vec<u8>> {
    let out = DatasetBundle::open(root).unwrap().output_dir();
    OUTPUTS.iter().map(|n| (*n, fs::read(out.join(n)).unwrap_or_default())).collect()
}

fn copy_without_cache(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            if entry.file_name() != "cache" {
                copy_without_cache(&entry.path(), &target);
            }
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn pipeline_determinism() -> Outcome {
    let mut o = Outcome::default();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("video");
    let spec = SyntheticSpec::default();
    generate(&root, &spec).unwrap();
    o.notes.push(format!("{} frames at {}x{}", spec.frames, spec.width, spec.height));

    let stages = Stage::ALL.len();
    let (first, first_time) = match timed_run(&root, 1) {
        Ok(r) => r,
        Err(e) => {
            o.failures.push(format!("first run failed: {e}"));
            return o;
        }
    };
    o.expect(first.count(StageStatus::Done) == stages, || format!("first run:\n{first}"));
    o.within("first run", first_time, Duration::from_secs(60));
    let before = outputs(&root);

    let (rerun, rerun_time) = timed_run(&root, 1).unwrap();
    let hits = rerun.count(StageStatus::Cached);
    o.expect(hits == stages, || format!("rerun cache hits {hits} of {stages} stages"));
    let ratio = rerun_time.as_secs_f64() / first_time.as_secs_f64();
    o.notes.push(format!("rerun {:.1}% of first", ratio * 100.0));
    o.expect(ratio < 0.05, || format!("rerun took {:.1}% of the first run", ratio * 100.0));
    let after = outputs(&root);
    for name in OUTPUTS {
        o.expect(!before[name].is_empty() && before[name] == after[name], || format!("{name} changed on rerun"));
    }

    let copy = dir.path().join("video-4");
    copy_without_cache(&root, &copy);
    match timed_run(&copy, 4) {
        Ok((r, _)) => {
            o.expect(r.count(StageStatus::Done) == stages, || format!("4-worker run:\n{r}"));
            let parallel = outputs(&copy);
            for name in OUTPUTS {
                o.expect(before[name] == parallel[name], || format!("{name} differs between 1 and 4 workers"));
            }
        }
        Err(e) => o.failures.push(format!("4-worker run failed: {e}")),
    }
    o
}

// ----------------------------------------------------------------- ranking

fn random_table(seed: u64, n: usize) -> Vec<RawScores> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let faces = rng.random_range(0..3);
            raw(
                rng.random(),
                &[("k", rng.random_range(-1.0..1.0))],
                rng.random(),
                &(0..faces).map(|_| rng.random()).collect::<Vec<f64>>(),
            )
        })
        .collect()
}

fn order(scores: &[ScoreVector]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].final_score.total_cmp(&scores[a].final_score).then(a.cmp(&b)));
    idx
}

fn ranking_invariances() -> Outcome {
    let mut o = Outcome::default();
    let known = vec!["k".to_string()];
    let mut rng = seeded(99);
    let score = |t: &[RawScores], w: &WeightConfig| score_candidates(&t.iter().collect::<Vec<_>>(), &known, w).unwrap();

    for table_no in 0..100u64 {
        let table = random_table(1000 + table_no, 40);
        let w = WeightConfig::default();
        let base = score(&table, &w);
        for col in 0..4 {
            let a = rng.random_range(0.01..100.0);
            let b = rng.random_range(-50.0..50.0);
            let mut moved = table.clone();
            for r in &mut moved {
                match col {
                    0 => r.aesthetic = a * r.aesthetic + b,
                    1 => {
                        let v = r.semantic["k"];
                        r.semantic.insert("k".into(), a * v + b);
                    }
                    2 => r.logo = a * r.logo + b,
                    _ => r.face_position.iter_mut().for_each(|v| *v = a * *v + b),
                }
            }
            let s = score(&moved, &w);
            o.expect(order(&base) == order(&s), || format!("table {table_no}: column {col} rescaled by {a}·x+{b} reorders"));
        }

        let fw = rng.random_range(0.0..10.0);
        let ow = rng.random_range(0.0..10.0);
        let other = WeightConfig {
            face_position: fw,
            on_face_focus: ow,
            ..Default::default()
        };
        let s = score(&table, &other);
        for (i, r) in table.iter().enumerate() {
            if r.face_count() == 0 {
                o.expect(base[i].final_score == s[i].final_score, || {
                    format!("table {table_no}: faceless candidate {i} moved with face weights")
                });
            }
        }

        let specs: Vec<Spec> = table
            .iter()
            .enumerate()
            .map(|(i, r)| Spec {
                frame_id: i as u64,
                group_id: rng.random_range(0..25),
                faces: (0..r.face_count()).map(|_| (0, Emotion::Neutral, false)).collect(),
                shot_scale: None,
                raw: r.clone(),
            })
            .collect();
        let ds = dataset(specs, &[AspectTag::Original], &["k"]);
        let c = rng.random_range(0.1..50.0);
        let w = WeightConfig {
            aesthetic: 0.3,
            semantic: 1.2,
            logo: 0.7,
            face_position: 2.0,
            on_face_focus: 0.1,
            ..Default::default()
        };
        let scaled = WeightConfig {
            aesthetic: w.aesthetic * c,
            semantic: w.semantic * c,
            logo: w.logo * c,
            face_position: w.face_position * c,
            on_face_focus: w.on_face_focus * c,
            ..w.clone()
        };
        let ids = |w: WeightConfig| -> Vec<String> {
            let q = SearchQuery {
                weights: Some(w),
                page_size: 100,
                ..Default::default()
            };
            search(&ds, &q).unwrap().hits.into_iter().map(|h| h.candidate_id).collect()
        };
        o.expect(ids(w.clone()) == ids(scaled), || format!("table {table_no}: weights ×{c} change search order"));
    }
    o.notes.push("100 tables".into());
    o
}

// ----------------------------------------------------------------- cropper

fn letterboxed(w: u32, h: u32, top: u32, bottom: u32, seed: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        if y < top || y >= h - bottom {
            Rgb([(x % 3) as u8, 0, (y % 5) as u8])
        } else {
            Rgb([((x * 7 + y * 3 + seed) % 200) as u8 + 40, 90, 120])
        }
    })
}

fn cropper_suite() -> Outcome {
    let mut o = Outcome::default();
    let cfg = CropConfig::default();

    for (w, h, top, bottom) in [(64, 48, 10, 10), (320, 180, 20, 20), (320, 180, 0, 0), (200, 120, 7, 13), (96, 96, 31, 0)] {
        let mut frames: Vec<RgbImage> = (0..30).map(|s| letterboxed(w, h, top, bottom, s)).collect();
        // a few fully dark frames must not move the estimate
        frames.extend((0..5).map(|_| RgbImage::new(w, h)));
        let refs: Vec<(u64, &RgbImage)> = frames.iter().enumerate().map(|(i, f)| (i as u64, f)).collect();
        let est = detect_letterbox(&refs, &cfg).unwrap();
        o.expect((est.top_rows, est.bottom_rows) == (top, bottom), || {
            format!("{w}x{h} bars {top}/{bottom}: estimated {}/{}", est.top_rows, est.bottom_rows)
        });
    }

    let aspects = [AspectTag::Ratio(2, 3), AspectTag::Ratio(16, 9), AspectTag::Ratio(1, 1), AspectTag::Ratio(4, 5), AspectTag::Original];
    let mut total = 0usize;
    for (w, h) in [(320u32, 140u32), (1920, 1080), (640, 480), (100, 150), (37, 91), (1080, 1920)] {
        for aspect in aspects {
            let cands = generate_crop_candidates(w, h, aspect, &cfg).unwrap();
            total += cands.len();
            o.expect(cands.iter().any(|c| c.rejected_reason.is_none()), || format!("{w}x{h} {aspect}: no usable crop"));
            for c in &cands {
                let r = c.rect;
                let inside = r.x >= 0 && r.y >= 0 && r.w > 0 && r.h > 0 && r.x + r.w <= i64::from(w) && r.y + r.h <= i64::from(h);
                let shaped = match aspect {
                    AspectTag::Original => r == Rect::new(0, 0, i64::from(w), i64::from(h)),
                    // one side is derived from the other by rounding to the nearest pixel
                    AspectTag::Ratio(a, b) => (r.w * i64::from(b) - r.h * i64::from(a)).abs() <= i64::from(a.max(b)) / 2,
                };
                o.expect(inside && shaped && c.aspect == aspect, || format!("{w}x{h} {aspect}: bad candidate {r:?}"));
            }
        }
    }
    o.notes.push(format!("{total} candidates checked"));

    let face = |x, y, s| FaceBox {
        bbox: Rect::new(x, y, s, s),
        center: Point::new((x + s / 2) as f64, (y + s / 2) as f64),
    };
    let portrait = |x| CropCandidate {
        rect: Rect::new(x, 0, 100, 150),
        aspect: AspectTag::Ratio(2, 3),
        score: 0.0,
        face_centered: false,
        rejected_reason: None,
    };
    let verdict = |cand: CropCandidate, faces: &[FaceBox]| {
        let mut v = [cand];
        filter_crops(&mut v, faces, &cfg);
        v[0].rejected_reason
    };
    let cases = [
        ("face cut by the right edge", portrait(0), vec![face(80, 40, 40)], Some(RejectReason::BisectsFace)),
        ("face cut by the left edge", portrait(50), vec![face(30, 40, 40)], Some(RejectReason::BisectsFace)),
        ("lone face at the left border", portrait(0), vec![face(0, 40, 20)], Some(RejectReason::OffCenterSingleFace)),
        ("lone face at the right border", portrait(0), vec![face(80, 40, 20)], Some(RejectReason::OffCenterSingleFace)),
        ("lone centred face", portrait(0), vec![face(40, 40, 20)], None),
    ];
    for (name, cand, faces, want) in cases {
        let got = verdict(cand, &faces);
        o.expect(got == want, || format!("{name}: {got:?}, want {want:?}"));
    }

    // every generated crop that partially overlaps a face is rejected as bisecting
    let faces = [face(150, 40, 50)];
    let mut cands = generate_crop_candidates(320, 180, AspectTag::Ratio(2, 3), &cfg).unwrap();
    filter_crops(&mut cands, &faces, &cfg);
    for c in &cands {
        let o_area = c.rect.overlap_area(&faces[0].bbox);
        if c.rejected_reason != Some(RejectReason::AreaTooSmall) && o_area > 0 && o_area < faces[0].bbox.area() {
            o.expect(c.rejected_reason == Some(RejectReason::BisectsFace), || format!("{:?} cuts the face but is {:?}", c.rect, c.rejected_reason));
        }
    }
    o
}

// --------------------------------------------------------------- reference

fn reference_tooling() -> Outcome {
    let mut o = Outcome::default();
    let cfg = SelectionConfig::default();
    o.expect((cfg.exact_match_threshold, cfg.similar_match_threshold) == (0.886, 0.799), || {
        format!("default tiers {}/{}", cfg.exact_match_threshold, cfg.similar_match_threshold)
    });

    let a = [1.0f32, 0.0, 0.0];
    let b = [0.0f32, 1.0, 0.0];
    let cands = vec![("a", &a[..]), ("b", &b[..])];
    let tilted = |cos: f64| {
        let t = cos.acos();
        [t.cos() as f32, 0.0, t.sin() as f32]
    };
    let fixtures = [
        ("exact", a, MatchTier::Exact, "a"),
        ("near-exact", tilted(0.95), MatchTier::Exact, "a"),
        ("similar", tilted(0.83), MatchTier::Similar, "a"),
        ("none", [0.0, 0.0, 1.0], MatchTier::None, ""),
        ("weak", tilted(0.7), MatchTier::None, "a"),
    ];
    for (name, reference, tier, best) in fixtures {
        let r = evaluate_against_reference(cands.clone(), &reference, &cfg).unwrap();
        o.expect(r.tier == tier, || format!("{name}: tier {:?}, want {tier:?}", r.tier));
        if !best.is_empty() {
            o.expect(r.candidate_id == best, || format!("{name}: best {}", r.candidate_id));
        }
    }

    // report over a simulated corpus; printed only
    let mut rng = seeded(31);
    let mut reports = Vec::new();
    for _ in 0..40 {
        let embs: Vec<Vec<f32>> = (0..30).map(|_| random_unit(32, &mut rng).iter().map(|&x| x as f32).collect()).collect();
        let pick = &embs[rng.random_range(0..embs.len())];
        let noise = rng.random_range(0.0..1.2);
        let reference: Vec<f32> = pick
            .iter()
            .zip(random_unit(32, &mut rng))
            .map(|(&x, n)| x + (noise * n) as f32)
            .collect();
        let ids: Vec<String> = (0..embs.len()).map(|i| format!("c{i}")).collect();
        let c: Vec<(&str, &[f32])> = ids.iter().map(|s| s.as_str()).zip(embs.iter().map(|e| e.as_slice())).collect();
        reports.push(evaluate_against_reference(c, &reference, &cfg).unwrap());
    }
    let rep = corpus_report(&reports).unwrap();
    o.notes.push(format!(
        "simulated corpus of {}: exact {:.1}%, similar or better {:.1}%, mean best {:.3}",
        rep.videos,
        rep.exact_rate * 100.0,
        rep.similar_or_better_rate * 100.0,
        rep.mean_best_similarity
    ));
    o
}
