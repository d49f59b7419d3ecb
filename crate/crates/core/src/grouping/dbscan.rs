//! Density-based clustering with exact Euclidean neighbourhoods.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::NOISE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
}

/// Label every point with a cluster id (`0..`) or [`NOISE`].
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Points are visited in ascending index order, so cluster
/// ids and the claim on shared border points are reproducible.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize, metric: Metric) -> Result<Vec<i64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("eps must be > 0, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::Config("min_pts must be >= 1".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite point".into()));
    }
    let Metric::Euclidean = metric;
    let eps2 = eps * eps;
    let neighbours: Vec<Vec<usize>> = points
        .par_iter()
        .map(|p| {
            points
                .iter()
                .enumerate()
                .filter(|(_, q)| squared_distance(p, q) <= eps2)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    const UNVISITED: i64 = i64::MIN;
    let mut labels = vec![UNVISITED; points.len()];
    let mut next = 0i64;
    for i in 0..points.len() {
        if labels[i] != UNVISITED {
            continue;
        }
        if neighbours[i].len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        let cluster = next;
        next += 1;
        labels[i] = cluster;
        let mut queue: std::collections::VecDeque<usize> = neighbours[i].iter().copied().collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                // border point
                labels[j] = cluster;
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = cluster;
            if neighbours[j].len() >= min_pts {
                queue.extend(neighbours[j].iter().copied());
            }
        }
    }
    Ok(labels)
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_pairs() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![10.0, 0.0],
            vec![10.1, 0.0],
        ];
        let l = dbscan(&pts, 1.0, 1, Metric::Euclidean).unwrap();
        assert_eq!(l, vec![0, 0, 1, 1]);
    }

    #[test]
    fn single_point_singleton() {
        let l = dbscan(&[vec![3.0]], 0.5, 1, Metric::Euclidean).unwrap();
        assert_eq!(l, vec![0]);
    }

    #[test]
    fn too_sparse_is_noise() {
        let pts = vec![vec![1.0, 1.0]; 49];
        let l = dbscan(&pts, 0.5, 50, Metric::Euclidean).unwrap();
        assert!(l.iter().all(|&x| x == NOISE));
    }

    #[test]
    fn bad_eps() {
        assert!(matches!(dbscan(&[], 0.0, 1, Metric::Euclidean), Err(Error::Config(_))));
    }

    #[test]
    fn min_pts_one_never_labels_noise() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * i) as f64]).collect();
        let l = dbscan(&pts, 0.5, 1, Metric::Euclidean).unwrap();
        assert!(l.iter().all(|&x| x >= 0));
    }

    #[test]
    fn border_point_goes_to_first_cluster() {
        // cores at 0 and 2 (min_pts 4), shared border at 1.0
        let pts = vec![
            vec![-0.5],
            vec![-0.4],
            vec![0.0],
            vec![2.0],
            vec![2.4],
            vec![2.5],
            vec![1.0],
        ];
        let l = dbscan(&pts, 1.0, 4, Metric::Euclidean).unwrap();
        assert_eq!(l[6], l[2]);
        assert_ne!(l[2], l[3]);
    }
}
