//! Redundancy grouping of keyframes and identity clustering of faces.

pub mod dbscan;
pub mod pca;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::config::{FaceClusterConfig, GroupingConfig, ScoreSpace};
use crate::error::{Error, Result};
use crate::model::{cosine_slices, NOISE};
pub use dbscan::{dbscan, Metric};
pub use pca::{fit_pca, PcaDecomposition, PcaModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub group_id: u64,
    /// Member keyframes in temporal order.
    pub members: Vec<u64>,
    /// Highest-scoring member, filled in after scoring.
    pub representative: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeEmbedding {
    pub frame_id: u64,
    pub shot_id: u64,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingResult {
    pub groups: Vec<Group>,
    pub components: usize,
    pub degenerate_pca: bool,
    /// Density cluster label per keyframe, in input order.
    pub labels: Vec<i64>,
}

impl GroupingResult {
    pub fn group_of(&self) -> BTreeMap<u64, u64> {
        self.groups
            .iter()
            .flat_map(|g| g.members.iter().map(move |m| (*m, g.group_id)))
            .collect()
    }
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

fn l2_normalized(v: &[f32]) -> Vec<f64> {
    let n = crate::model::norm(v);
    if n == 0.0 {
        return to_f64(v);
    }
    v.iter().map(|&x| f64::from(x) / n).collect()
}

/// Group near-duplicate keyframes.
///
/// Embeddings are projected with PCA and density-clustered; two keyframes
/// are then joined when they share a cluster and their shots are at most
/// `max_shot_gap` apart. Connected components become groups, which merges
/// adjacent shots showing the same content and splits clusters that span
/// distant parts of the video.
pub fn group_keyframes(keyframes: &[KeyframeEmbedding], cfg: &GroupingConfig) -> Result<GroupingResult> {
    if keyframes.is_empty() {
        return Ok(GroupingResult {
            groups: Vec::new(),
            components: 0,
            degenerate_pca: false,
            labels: Vec::new(),
        });
    }
    let missing: Vec<String> = keyframes
        .iter()
        .filter(|k| k.embedding.is_empty())
        .map(|k| k.frame_id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "keyframes without embeddings: {}",
            missing.join(", ")
        )));
    }
    let rows: Vec<Vec<f64>> = keyframes
        .iter()
        .map(|k| {
            if cfg.l2_normalize {
                l2_normalized(&k.embedding)
            } else {
                to_f64(&k.embedding)
            }
        })
        .collect();

    let (projected, components, degenerate) = if rows.len() >= 2 {
        let model = fit_pca(&rows, cfg.variance_target)?;
        (model.project_all(&rows), model.k(), model.degenerate)
    } else {
        (vec![vec![0.0]], 1, false)
    };
    let labels = dbscan(&projected, cfg.eps, cfg.min_pts, Metric::Euclidean)?;

    let n = keyframes.len();
    let mut uf = UnionFind::new(n);
    let mut by_label: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE {
            by_label.entry(l).or_default().push(i);
        }
    }
    for members in by_label.values() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                if keyframes[i].shot_id.abs_diff(keyframes[j].shot_id) <= cfg.max_shot_gap {
                    uf.union(i, j);
                }
            }
        }
    }

    let mut components_map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        components_map.entry(uf.find(i)).or_default().push(i);
    }
    let mut comps: Vec<Vec<usize>> = components_map.into_values().collect();
    comps.sort_by_key(|c| c[0]);
    let groups = comps
        .into_iter()
        .enumerate()
        .map(|(gid, idxs)| Group {
            group_id: gid as u64,
            members: idxs.iter().map(|&i| keyframes[i].frame_id).collect(),
            representative: None,
        })
        .collect();
    Ok(GroupingResult {
        groups,
        components,
        degenerate_pca: degenerate,
        labels,
    })
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Clustering quality: `Σ |C| · min pairwise cosine within C − noise count`.
///
/// A singleton cluster has no pairs and counts as perfectly coherent.
pub fn clustering_score(labels: &[i64], embeddings: &[&[f32]]) -> Result<f64> {
    if labels.len() != embeddings.len() {
        return Err(Error::Validation(format!(
            "{} labels for {} embeddings",
            labels.len(),
            embeddings.len()
        )));
    }
    let mut clusters: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    let mut noise = 0usize;
    for (i, &l) in labels.iter().enumerate() {
        if l == NOISE {
            noise += 1;
        } else {
            clusters.entry(l).or_default().push(i);
        }
    }
    let mut score = 0.0;
    for members in clusters.values() {
        let mut min_cos = 1.0f64;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                min_cos = min_cos.min(cosine_slices(embeddings[i], embeddings[j])?);
            }
        }
        score += members.len() as f64 * min_cos;
    }
    Ok(score - noise as f64)
}

/// One clustering data point: an appearance of a face (the detection itself
/// or one of its crops).
#[derive(Debug, Clone, PartialEq)]
pub struct FacePoint {
    pub face_id: String,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceCluster {
    pub cluster_id: i64,
    pub member_faces: Vec<String>,
    pub size: usize,
    /// 0 for the largest cluster.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub k: usize,
    pub score: f64,
    pub clusters: usize,
    pub noise: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceClustering {
    /// Cluster id per face (first appearance decides), noise = −1.
    pub face_labels: BTreeMap<String, i64>,
    /// Label per input point.
    pub point_labels: Vec<i64>,
    pub clusters: Vec<FaceCluster>,
    pub base_k: usize,
    pub chosen_k: usize,
    pub score: f64,
    pub score_curve: Vec<GridPoint>,
    pub manual_parameters_needed: bool,
}

/// Cluster face appearances into identities.
///
/// The base component count comes from the variance target; every count
/// within `± grid_halfwidth` of it is tried and the labeling with the best
/// [`clustering_score`] wins, ties going to fewer components.
pub fn cluster_faces(points: &[FacePoint], cfg: &FaceClusterConfig) -> Result<FaceClustering> {
    let n = points.len();
    if n < cfg.min_pts || n < 2 {
        let labels = if n == 1 && cfg.min_pts <= 1 { vec![0] } else { vec![NOISE; n] };
        let manual = n < cfg.min_pts;
        if manual {
            warn!(faces = n, min_pts = cfg.min_pts, "too few faces for clustering; manual parameters needed");
        }
        let score = if n == 0 {
            0.0
        } else {
            let embs: Vec<&[f32]> = points.iter().map(|p| p.embedding.as_slice()).collect();
            clustering_score(&labels, &embs)?
        };
        return Ok(finish(points, labels, 0, 0, score, Vec::new(), manual));
    }
    let rows: Vec<Vec<f64>> = points.iter().map(|p| to_f64(&p.embedding)).collect();
    let dec = PcaDecomposition::fit(&rows)?;
    let kmax = dec.max_components().max(1);
    let base = cfg
        .base_k_override
        .unwrap_or_else(|| dec.components_for_variance(cfg.variance_target))
        .clamp(1, kmax);
    let lo = base.saturating_sub(cfg.grid_halfwidth).max(1);
    let hi = (base + cfg.grid_halfwidth).min(kmax);
    let original: Vec<&[f32]> = points.iter().map(|p| p.embedding.as_slice()).collect();

    let evaluated: Vec<Result<(GridPoint, Vec<i64>)>> = (lo..=hi)
        .into_par_iter()
        .map(|k| {
            let model = dec.truncate(k);
            let projected = model.project_all(&rows);
            let labels = dbscan(&projected, cfg.eps, cfg.min_pts, Metric::Euclidean)?;
            let score = match cfg.score_space {
                ScoreSpace::Original => clustering_score(&labels, &original)?,
                ScoreSpace::Projected => {
                    let proj32: Vec<Vec<f32>> = projected
                        .iter()
                        .map(|r| r.iter().map(|&v| v as f32).collect())
                        .collect();
                    let refs: Vec<&[f32]> = proj32.iter().map(Vec::as_slice).collect();
                    clustering_score(&labels, &refs)?
                }
            };
            let clusters = labels.iter().filter(|&&l| l != NOISE).collect::<std::collections::BTreeSet<_>>().len();
            let noise = labels.iter().filter(|&&l| l == NOISE).count();
            Ok((
                GridPoint {
                    k,
                    score,
                    clusters,
                    noise,
                },
                labels,
            ))
        })
        .collect();

    let mut curve = Vec::new();
    let mut best: Option<(usize, f64, Vec<i64>)> = None;
    for item in evaluated {
        let (gp, labels) = item?;
        let better = best.as_ref().is_none_or(|(_, s, _)| gp.score > *s);
        if better {
            best = Some((gp.k, gp.score, labels));
        }
        curve.push(gp);
    }
    let (chosen_k, score, labels) = best.expect("grid is non-empty");
    Ok(finish(points, labels, base, chosen_k, score, curve, false))
}

/// Relabel clusters by decreasing size and collect per-face labels.
fn finish(
    points: &[FacePoint],
    labels: Vec<i64>,
    base_k: usize,
    chosen_k: usize,
    score: f64,
    score_curve: Vec<GridPoint>,
    manual: bool,
) -> FaceClustering {
    let mut face_labels: BTreeMap<String, i64> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (p, &l) in points.iter().zip(&labels) {
        if !face_labels.contains_key(&p.face_id) {
            face_labels.insert(p.face_id.clone(), l);
            order.push(p.face_id.clone());
        }
    }
    let mut raw: BTreeMap<i64, Vec<String>> = BTreeMap::new();
    for f in &order {
        let l = face_labels[f];
        if l != NOISE {
            raw.entry(l).or_default().push(f.clone());
        }
    }
    let mut ranked: Vec<(i64, Vec<String>)> = raw.into_iter().collect();
    ranked.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    let remap: BTreeMap<i64, i64> = ranked
        .iter()
        .enumerate()
        .map(|(rank, (old, _))| (*old, rank as i64))
        .collect();
    let point_labels: Vec<i64> = labels
        .iter()
        .map(|l| remap.get(l).copied().unwrap_or(NOISE))
        .collect();
    for l in face_labels.values_mut() {
        *l = remap.get(l).copied().unwrap_or(NOISE);
    }
    let clusters = ranked
        .into_iter()
        .enumerate()
        .map(|(rank, (_, members))| FaceCluster {
            cluster_id: rank as i64,
            size: members.len(),
            member_faces: members,
            rank,
        })
        .collect();
    FaceClustering {
        face_labels,
        point_labels,
        clusters,
        base_k,
        chosen_k,
        score,
        score_curve,
        manual_parameters_needed: manual,
    }
}
