//! Principal component analysis via a symmetric Jacobi eigensolver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full eigendecomposition of a sample covariance, components sorted by
/// decreasing variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaDecomposition {
    pub mean: Vec<f64>,
    /// Unit-norm principal axes, `rank` rows of length `d`.
    pub axes: Vec<Vec<f64>>,
    /// Variance along each axis.
    pub variances: Vec<f64>,
    pub total_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × d`, rows orthonormal.
    pub components: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
    /// Set when the input had zero total variance.
    pub degenerate: bool,
}

impl PcaDecomposition {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::Domain(format!("PCA needs at least 2 rows, got {n}")));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::Domain("PCA rows must share a non-zero dimension".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("PCA input has non-finite values".into()));
        }
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
            .collect();
        let denom = (n - 1) as f64;
        let max_rank = d.min(n - 1);

        let (values, axes) = if d <= n {
            let mut cov = vec![vec![0.0; d]; d];
            for r in &centered {
                for i in 0..d {
                    let ri = r[i];
                    if ri == 0.0 {
                        continue;
                    }
                    for j in i..d {
                        cov[i][j] += ri * r[j];
                    }
                }
            }
            for i in 0..d {
                for j in i..d {
                    cov[i][j] /= denom;
                    cov[j][i] = cov[i][j];
                }
            }
            let (vals, vecs) = symmetric_eigen(cov);
            (vals, vecs)
        } else {
            // Gram route: eigenvectors of X Xᵀ map to axes through Xᵀ.
            let mut gram = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i..n {
                    let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                    gram[i][j] = dot / denom;
                    gram[j][i] = gram[i][j];
                }
            }
            let (vals, vecs) = symmetric_eigen(gram);
            let axes = vecs
                .iter()
                .zip(&vals)
                .map(|(u, &lambda)| {
                    let mut axis = vec![0.0; d];
                    for (ui, row) in u.iter().zip(&centered) {
                        for (a, v) in axis.iter_mut().zip(row) {
                            *a += ui * v;
                        }
                    }
                    let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
                    if norm > 0.0 && lambda > 0.0 {
                        axis.iter_mut().for_each(|a| *a /= norm);
                    }
                    axis
                })
                .collect();
            (vals, axes)
        };

        let total_variance: f64 = centered
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / denom;
        let mut axes: Vec<Vec<f64>> = axes.into_iter().take(max_rank).collect();
        let variances: Vec<f64> = values.into_iter().take(max_rank).map(|v| v.max(0.0)).collect();
        for axis in &mut axes {
            fix_sign(axis);
        }
        Ok(Self {
            mean,
            axes,
            variances,
            total_variance,
        })
    }

    pub fn max_components(&self) -> usize {
        self.axes.len()
    }

    pub fn ratios(&self) -> Vec<f64> {
        if self.total_variance <= 0.0 {
            return vec![0.0; self.variances.len()];
        }
        self.variances
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    /// Smallest `k ≥ 1` whose cumulative explained variance reaches `target`.
    pub fn components_for_variance(&self, target: f64) -> usize {
        let mut acc = 0.0;
        for (i, r) in self.ratios().iter().enumerate() {
            acc += r;
            // tolerance for ratios that sum to the target up to rounding
            if acc >= target - 1e-12 {
                return i + 1;
            }
        }
        self.max_components().max(1)
    }

    pub fn truncate(&self, k: usize) -> PcaModel {
        let degenerate = self.total_variance <= 0.0;
        if degenerate {
            return PcaModel {
                mean: self.mean.clone(),
                components: vec![vec![0.0; self.mean.len()]],
                explained_variance_ratio: vec![0.0],
                degenerate,
            };
        }
        let k = k.clamp(1, self.max_components());
        PcaModel {
            mean: self.mean.clone(),
            components: self.axes[..k].to_vec(),
            explained_variance_ratio: self.ratios()[..k].to_vec(),
            degenerate,
        }
    }
}

/// Fit a PCA keeping the fewest components that explain `variance_target`.
pub fn fit_pca(rows: &[Vec<f64>], variance_target: f64) -> Result<PcaModel> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::Config("variance target must lie in (0,1]".into()));
    }
    let dec = PcaDecomposition::fit(rows)?;
    let k = dec.components_for_variance(variance_target);
    Ok(dec.truncate(k))
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(row.iter().zip(&self.mean))
                    .map(|(ci, (v, m))| ci * (v - m))
                    .sum()
            })
            .collect()
    }

    pub fn project_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.project(r)).collect()
    }

    pub fn reconstruct(&self, projected: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &p) in self.components.iter().zip(projected) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += p * ci;
            }
        }
        out
    }
}

/// Make the largest-magnitude entry positive (first one on ties).
fn fix_sign(v: &mut [f64]) {
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in decreasing order with matching unit eigenvectors.
pub fn symmetric_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    // v holds eigenvectors as columns
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        let vecs = (0..n).map(|i| (0..n).map(|r| v[r][i]).collect()).collect();
        return (vec![0.0; n], vecs);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|r| v[r][i]).collect())
        .collect();
    (values, vectors)
}
