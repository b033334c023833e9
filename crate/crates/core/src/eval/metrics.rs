use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub rmse: f64,
    pub r2: f64,
    pub pearson: f64,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// RMSE, coefficient of determination and Pearson correlation. The
/// correlation is reported as 0 when the predictions are constant.
pub fn regression_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<RegressionMetrics> {
    if y_true.is_empty() || y_true.len() != y_pred.len() {
        return Err(Error::InvalidInput(format!(
            "need equal nonzero lengths, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.iter().chain(y_pred).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite target or prediction".into()));
    }
    let n = y_true.len() as f64;
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    let rmse = (ss_res / n).sqrt();
    let (mt, mp) = (mean(y_true), mean(y_pred));
    let ss_tot: f64 = y_true.iter().map(|t| (t - mt) * (t - mt)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("targets have zero variance".into()));
    }
    let ss_pred: f64 = y_pred.iter().map(|p| (p - mp) * (p - mp)).sum();
    let cov: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - mt) * (p - mp)).sum();
    let pearson = if ss_pred == 0.0 {
        0.0
    } else {
        (cov / (ss_tot * ss_pred).sqrt()).clamp(-1.0, 1.0)
    };
    Ok(RegressionMetrics {
        rmse,
        r2: 1.0 - ss_res / ss_tot,
        pearson,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassScores>,
    pub accuracy: f64,
    pub macro_avg: ClassScores,
    pub weighted_avg: ClassScores,
    /// `confusion[true][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Per-class precision/recall/F1 (0 wherever a ratio is 0/0), accuracy, and
/// macro and support-weighted averages.
pub fn classification_metrics(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<ClassificationReport> {
    if y_true.is_empty() || y_true.len() != y_pred.len() {
        return Err(Error::InvalidInput(format!(
            "need equal nonzero lengths, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if let Some(bad) = y_true.iter().chain(y_pred).find(|&&c| c >= n_classes) {
        return Err(Error::InvalidInput(format!("label {bad} outside {n_classes} classes")));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let per_class: Vec<ClassScores> = (0..n_classes)
        .map(|c| {
            let tp = confusion[c][c];
            let predicted: usize = (0..n_classes).map(|r| confusion[r][c]).sum();
            let support: usize = confusion[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let n = y_true.len();
    let avg = |weight: &dyn Fn(&ClassScores) -> f64| {
        let total: f64 = per_class.iter().map(weight).sum();
        let f = |g: fn(&ClassScores) -> f64| per_class.iter().map(|s| weight(s) * g(s)).sum::<f64>() / total;
        ClassScores {
            precision: f(|s| s.precision),
            recall: f(|s| s.recall),
            f1: f(|s| s.f1),
            support: n,
        }
    };
    let macro_avg = avg(&|_| 1.0);
    let weighted_avg = avg(&|s| s.support as f64);
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    Ok(ClassificationReport {
        per_class,
        accuracy: ratio(correct, n),
        macro_avg,
        weighted_avg,
        confusion,
    })
}
