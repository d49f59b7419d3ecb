//! Independent reference implementations and fixtures shared by the
//! integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Textbook O(n²) density clustering.
///
/// Core points are joined into components when within eps of each other;
/// components are numbered by their smallest core index and a border point
/// goes to the lowest-numbered component among its core neighbours.
pub fn naive_dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<i64> {
    let n = points.len();
    let close = |i: usize, j: usize| {
        let d2: f64 = points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d2 <= eps * eps
    };
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| close(i, j)).count() >= min_pts)
        .collect();
    let mut comp = vec![usize::MAX; n];
    let mut ncomp = 0;
    for s in 0..n {
        if !core[s] || comp[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = ncomp;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if core[j] && comp[j] == usize::MAX && close(i, j) {
                    comp[j] = ncomp;
                    stack.push(j);
                }
            }
        }
        ncomp += 1;
    }
    (0..n)
        .map(|i| {
            if core[i] {
                comp[i] as i64
            } else {
                (0..n)
                    .filter(|&j| core[j] && close(i, j))
                    .map(|j| comp[j] as i64)
                    .min()
                    .unwrap_or(-1)
            }
        })
        .collect()
}

/// Eigenvalues (descending) and unit eigenvectors of the sample covariance,
/// computed densely with nalgebra.
pub fn covariance_eigen(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows[0].len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut r in c.row_iter_mut() {
        r -= &mean;
    }
    let cov = c.transpose() * &c / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = idx
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (vals, vecs)
}

/// Largest principal angle between the spans of two orthonormal row sets.
pub fn subspace_angle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let d = a[0].len();
    let qa = DMatrix::from_fn(d, a.len(), |i, j| a[j][i]);
    let qb = DMatrix::from_fn(d, b.len(), |i, j| b[j][i]);
    let resid = &qa - &qb * (qb.transpose() * &qa);
    let s = resid.singular_values().max();
    s.min(1.0).asin()
}

/// Noisy unit vectors around the given centres, `per` points each, with the
/// true centre index per point.
pub fn blobs(centres: &[Vec<f64>], per: usize, sigma: f64, seed: u64) -> (Vec<Vec<f32>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per {
            let v: Vec<f64> = centre.iter().map(|x| x + normal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            pts.push(v.iter().map(|x| (x / norm) as f32).collect());
            truth.push(c);
        }
    }
    (pts, truth)
}

pub fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Fraction of clustered points whose cluster's majority true label matches.
pub fn purity(labels: &[i64], truth: &[usize]) -> f64 {
    use std::collections::BTreeMap;
    let mut counts: BTreeMap<i64, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&l, &t) in labels.iter().zip(truth) {
        if l >= 0 {
            *counts.entry(l).or_default().entry(t).or_default() += 1;
        }
    }
    let clustered: usize = counts.values().flat_map(|m| m.values()).sum();
    if clustered == 0 {
        return 0.0;
    }
    let majority: usize = counts.values().map(|m| *m.values().max().unwrap()).sum();
    majority as f64 / clustered as f64
}

/// Two labelings describe the same partition (ids may differ).
pub fn same_partition(a: &[i64], b: &[i64]) -> bool {
    use std::collections::BTreeMap;
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x == -1) != (y == -1) {
            return false;
        }
        if *fwd.entry(x).or_insert(y) != y || *back.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random matrix with entries in [-1, 1), shape `n × d`.
pub fn random_matrix(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub mod fixtures {
    use std::collections::BTreeMap;

    use framepick::config::{AspectTag, WeightConfig};
    use framepick::dataset::{
        Candidate, CandidateFace, FaceClusterSummary, KeywordInfo, ScoredDataset, VideoInfo, FORMAT_VERSION,
    };
    use framepick::grouping::{FaceCluster, Group};
    use framepick::model::{Emotion, KeywordSource, Rect, ShotScale};
    use framepick::scoring::RawScores;

    pub struct Spec {
        pub frame_id: u64,
        pub group_id: u64,
        pub faces: Vec<(i64, Emotion, bool)>,
        pub shot_scale: Option<ShotScale>,
        pub raw: RawScores,
    }

    pub fn raw(aes: f64, kw: &[(&str, f64)], logo: f64, fp: &[f64]) -> RawScores {
        RawScores {
            aesthetic: aes,
            semantic: kw.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            logo,
            face_position: fp.to_vec(),
            on_face: fp.iter().map(|v| v / 2.0).collect(),
            on_face_union: None,
        }
    }

    pub fn dataset(specs: Vec<Spec>, aspects: &[AspectTag], keywords: &[&str]) -> ScoredDataset {
        let mut candidates = Vec::new();
        let mut groups: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        let mut clusters: BTreeMap<i64, Vec<String>> = BTreeMap::new();
        for s in &specs {
            groups.entry(s.group_id).or_default().push(s.frame_id);
            for (i, (cid, _, _)) in s.faces.iter().enumerate() {
                if *cid >= 0 {
                    clusters.entry(*cid).or_default().push(format!("{}-{i}", s.frame_id));
                }
            }
            for &aspect in aspects {
                candidates.push(Candidate {
                    candidate_id: Candidate::id_for(s.frame_id, aspect),
                    frame_id: s.frame_id,
                    shot_id: s.frame_id,
                    group_id: s.group_id,
                    aspect,
                    rect: Rect::new(0, 0, 100, 100),
                    alternates: Vec::new(),
                    face_centered_rect: None,
                    crop_fallback: None,
                    faces: s
                        .faces
                        .iter()
                        .enumerate()
                        .map(|(i, (cid, e, closed))| CandidateFace {
                            face_id: format!("{}-{i}", s.frame_id),
                            cluster_id: *cid,
                            emotion: *e,
                            eyes_closed: *closed,
                        })
                        .collect(),
                    shot_scale: s.shot_scale,
                    raw: s.raw.clone(),
                });
            }
        }
        let mut ranked: Vec<(i64, Vec<String>)> = clusters.into_iter().collect();
        ranked.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
        ScoredDataset {
            format_version: FORMAT_VERSION,
            config_digest: "0".into(),
            video: VideoInfo {
                video_id: "fixture".into(),
                title: "Fixture".into(),
                summary: String::new(),
                fps: 25.0,
                frame_count: 100,
                duration_s: 4.0,
                frame_width: 100,
                frame_height: 100,
            },
            keywords: keywords
                .iter()
                .map(|k| KeywordInfo {
                    text: k.to_string(),
                    source: KeywordSource::Metadata,
                })
                .collect(),
            frames: Vec::new(),
            groups: groups
                .into_iter()
                .map(|(g, members)| Group {
                    group_id: g,
                    members,
                    representative: None,
                })
                .collect(),
            faces: Vec::new(),
            face_clusters: FaceClusterSummary {
                clusters: ranked
                    .into_iter()
                    .enumerate()
                    .map(|(rank, (id, members))| FaceCluster {
                        cluster_id: id,
                        size: members.len(),
                        member_faces: members,
                        rank,
                    })
                    .collect(),
                base_k: 1,
                chosen_k: 1,
                score: 0.0,
                score_curve: Vec::new(),
                manual_parameters_needed: false,
            },
            candidates,
            default_weights: WeightConfig::default(),
        }
    }
}
