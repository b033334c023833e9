//! Latent-space k-NN prediction, metrics, subject-level bootstrap and
//! subject-wise cross-validation.

mod bootstrap;
mod cv;
mod folds;
mod metrics;

pub use bootstrap::{bootstrap_ci, percentile, resample_groups, BootstrapCi};
pub use cv::{cross_validate, run_cross_validation, CvResult, EvalConfig, FoldReport, Prediction, Task};
pub use folds::{subjects_of, Fold, FoldPlan};
pub use metrics::{classification_metrics, regression_metrics, ClassScores, ClassificationReport, RegressionMetrics};

use crate::error::{Error, Result};

/// Distances below this count as an exact match.
pub const EXACT_MATCH: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledEmbedding<T> {
    pub code: Vec<f64>,
    pub subject_id: String,
    pub target: T,
}

/// Indices and distances of the `k` nearest training codes; distance ties go
/// to the earlier training sample.
fn neighbors<T>(train: &[LabeledEmbedding<T>], query: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut d = train
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if e.code.len() != query.len() {
                return Err(Error::mismatch(query.len(), e.code.len()));
            }
            let s: f64 = e.code.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok((i, s.sqrt()))
        })
        .collect::<Result<Vec<_>>>()?;
    d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    d.truncate(k);
    Ok(d)
}

/// Neighbor weights proportional to `1/d`, scaled so the nearest has weight
/// 1. If any neighbor is an exact match, only exact matches count, equally
/// weighted.
fn weights(nb: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let exact: Vec<(usize, f64)> = nb.iter().filter(|(_, d)| *d < EXACT_MATCH).map(|&(i, _)| (i, 1.0)).collect();
    if !exact.is_empty() {
        return exact;
    }
    let nearest = nb[0].1;
    nb.iter().map(|&(i, d)| (i, nearest / d)).collect()
}

/// Inverse-distance weighted mean of the `k` nearest targets.
pub fn knn_regress(train: &[LabeledEmbedding<f64>], query: &[f64], k: usize) -> Result<f64> {
    let w = weights(&neighbors(train, query, k)?);
    let total: f64 = w.iter().map(|(_, w)| w).sum();
    Ok(w.iter().map(|&(i, w)| w * train[i].target).sum::<f64>() / total)
}

/// Class with the largest inverse-distance weight among the `k` nearest;
/// ties go to the smallest class index.
pub fn knn_classify(train: &[LabeledEmbedding<usize>], query: &[f64], k: usize) -> Result<usize> {
    let w = weights(&neighbors(train, query, k)?);
    let n_classes = w.iter().map(|&(i, _)| train[i].target).max().unwrap_or(0) + 1;
    let mut sums = vec![0.0; n_classes];
    for &(i, wi) in &w {
        sums[train[i].target] += wi;
    }
    let mut best = 0;
    for c in 1..n_classes {
        if sums[c] > sums[best] {
            best = c;
        }
    }
    Ok(best)
}
