use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_DROP_THRESHOLD: f64 = 0.2;
pub const DEFAULT_MAX_J: usize = 5;

/// Principal components of a set of angles.
///
/// The covariance uses denominator `n`, so the eigenvalues sum to the total
/// variance of the centered angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularPca {
    pub mean: Vec<f64>,
    /// Orthonormal eigenvectors, ordered by descending eigenvalue.
    pub eigenvectors: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Projections of the centered inputs on every eigenvector (`n x T`).
    pub scores: Vec<Vec<f64>>,
}

impl AngularPca {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Share of total variance explained by the first `j` components.
    pub fn explained_ratio(&self, j: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return 1.0;
        }
        self.eigenvalues.iter().take(j).sum::<f64>() / total
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.eigenvectors.iter().map(|v| stats::dot(&centered, v)).collect()
    }

    /// `mean + sum_j scores[j] * eigenvector[j]` over the given scores.
    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, v) in scores.iter().zip(&self.eigenvectors) {
            for (o, e) in out.iter_mut().zip(v) {
                *o += c * e;
            }
        }
        out
    }

    /// First `j` score columns as rows.
    pub fn truncated_scores(&self, j: usize) -> Vec<Vec<f64>> {
        self.scores.iter().map(|r| r[..j].to_vec()).collect()
    }
}

pub fn fit_pca(angles: &[Vec<f64>]) -> Result<AngularPca> {
    let n = angles.len();
    if n < 2 {
        return Err(Error::insufficient("PCA needs at least two observations"));
    }
    let d = angles[0].len();
    if let Some(bad) = angles.iter().find(|a| a.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let mean: Vec<f64> = (0..d)
        .map(|t| angles.iter().map(|a| a[t]).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, d, |i, t| angles[i][t] - mean[t]);
    let cov = (centered.transpose() * &centered) / n as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut eigenvalues = Vec::with_capacity(d);
    let mut eigenvectors = Vec::with_capacity(d);
    for &k in &order {
        eigenvalues.push(eig.eigenvalues[k].max(0.0));
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        // sign convention: largest-magnitude coordinate is positive
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvectors.push(v);
    }

    let scores = (0..n)
        .map(|i| {
            eigenvectors
                .iter()
                .map(|v| (0..d).map(|t| centered[(i, t)] * v[t]).sum())
                .collect()
        })
        .collect();
    Ok(AngularPca {
        mean,
        eigenvectors,
        eigenvalues,
        scores,
    })
}

/// Retained dimension from the successive drops of unexplained variance.
///
/// Adding component `J + 1` lowers `1 - R` by `lambda_{J+1}`, compared with
/// `lambda_J` for the previous component. The smallest `J` whose next drop is
/// below `threshold` times the previous one is returned; if none qualifies the
/// result is `max_j` (capped by the dimension).
pub fn select_j(pca: &AngularPca, threshold: f64, max_j: usize) -> usize {
    let lam = &pca.eigenvalues;
    let cap = max_j.clamp(1, lam.len().max(1));
    for j in 1..cap {
        let prev = lam[j - 1];
        let next = lam[j];
        if prev <= 0.0 || next / prev < threshold {
            return j;
        }
    }
    cap
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rank_one_data() {
        let dir = [0.6, 0.8, 0.0];
        let angles: Vec<Vec<f64>> = (0..10)
            .map(|i| dir.iter().map(|d| 0.1 * i as f64 * d + 1.0).collect())
            .collect();
        let p = fit_pca(&angles).unwrap();
        assert!(p.eigenvalues[0] > 0.0);
        for &l in &p.eigenvalues[1..] {
            assert_abs_diff_eq!(l, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn j_selection_cases() {
        let mut p = fit_pca(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        p.eigenvalues = vec![10.0, 1e-6, 1e-6, 1e-6];
        assert_eq!(select_j(&p, 0.2, 5), 1);
        p.eigenvalues = vec![1.0; 37];
        assert_eq!(select_j(&p, 0.2, 5), 5);
        p.eigenvalues = vec![5.0, 3.0, 2.0, 0.1, 0.05];
        assert_eq!(select_j(&p, 0.2, 5), 3);
    }

    #[test]
    fn too_few_rows() {
        assert!(fit_pca(&[vec![1.0, 2.0]]).is_err());
    }
}
