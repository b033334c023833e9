//! Principal component analysis of flattened vectors. Applied to shooting
//! vectors it is tangent PCA at the Fréchet mean; applied to raw coordinates
//! it is the Euclidean baseline.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `J` unit-norm principal directions, each of length `D`.
    pub components: Vec<Vec<f64>>,
    /// Sample variances (denominator `N − 1`) along each direction.
    pub eigenvalues: Vec<f64>,
    /// Fraction of the total variance carried by each direction.
    pub explained_variance_ratio: Vec<f64>,
}

/// Fits `j` components. Uses the `D×D` covariance when `D ≤ N` and the
/// `N×N` Gram matrix otherwise.
pub fn fit_pca(data: &[Vec<f64>], j: usize) -> Result<Pca> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidInput("PCA needs at least two samples".into()));
    }
    let d = data[0].len();
    if data.iter().any(|x| x.len() != d) {
        return Err(Error::InvalidInput("ragged PCA input".into()));
    }
    if j == 0 || j > (n - 1).min(d) {
        return Err(Error::InvalidInput(format!(
            "component count {j} must lie in 1..={}",
            (n - 1).min(d)
        )));
    }
    let mut mean = vec![0.0; d];
    for x in data {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v / n as f64);
    }
    let centered = DMatrix::from_fn(n, d, |i, c| data[i][c] - mean[c]);
    let denom = (n - 1) as f64;
    let total: f64 = centered.iter().map(|x| x * x).sum::<f64>() / denom;

    let (values, vectors) = if d <= n {
        let cov = centered.transpose() * &centered / denom;
        let eig = SymmetricEigen::new(cov);
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        let gram = &centered * centered.transpose() / denom;
        let eig = SymmetricEigen::new(gram);
        // Map Gram eigenvectors u to covariance eigenvectors Xᵀu / ‖Xᵀu‖.
        let mut dirs = centered.transpose() * &eig.eigenvectors;
        for mut col in dirs.column_iter_mut() {
            let norm = col.norm();
            if norm > 1e-12 * total.sqrt().max(1.0) {
                col /= norm;
            } else {
                col.fill(0.0);
            }
        }
        (eig.eigenvalues, dirs)
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let mut components = Vec::with_capacity(j);
    let mut eigenvalues = Vec::with_capacity(j);
    for &i in order.iter().take(j) {
        let mut c: Vec<f64> = vectors.column(i).iter().copied().collect();
        // Sign convention: largest-magnitude entry positive.
        let pivot = c.iter().copied().fold(0.0, |acc: f64, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(c);
        eigenvalues.push(values[i].max(0.0));
    }
    let explained_variance_ratio = eigenvalues
        .iter()
        .map(|l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    Ok(Pca {
        mean,
        components,
        eigenvalues,
        explained_variance_ratio,
    })
}

impl Pca {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Coordinates of `x` along each component.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((ci, xi), mi)| ci * (xi - mi)).sum())
            .collect()
    }

    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, a) in self.components.iter().zip(coords) {
            out.iter_mut().zip(c).for_each(|(o, ci)| *o += a * ci);
        }
        out
    }

    /// `mean + s·√λ_j·c_j`.
    pub fn traverse(&self, j: usize, s: f64) -> Result<Vec<f64>> {
        let c = self
            .components
            .get(j)
            .ok_or_else(|| Error::InvalidInput(format!("no component {j}")))?;
        let step = s * self.eigenvalues[j].sqrt();
        Ok(self.mean.iter().zip(c).map(|(m, ci)| m + step * ci).collect())
    }
}
