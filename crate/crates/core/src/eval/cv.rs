use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    bootstrap_ci, classification_metrics, knn_classify, knn_regress, regression_metrics, subjects_of, BootstrapCi,
    ClassificationReport, FoldPlan, LabeledEmbedding, RegressionMetrics,
};
use crate::data::RawSequence;
use crate::error::{Error, Result};
use crate::pipeline::{fit_pipeline_cached, AlignmentCache, FittedPipeline, PipelineConfig};
use crate::rvae::LossBreakdown;
use crate::seeds::substream_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Predict the real-valued `target`.
    Regression,
    /// Predict the `label`.
    Classification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub task: Task,
    pub k_neighbors: usize,
    pub bootstrap_replicates: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            task: Task::Regression,
            k_neighbors: 5,
            bootstrap_replicates: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject_id: String,
    pub sequence_id: String,
    pub fold: usize,
    /// Target value, or class index for classification.
    pub y_true: f64,
    pub y_pred: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub training_seed: u64,
    /// SHA-256 of the fitted pipeline archive.
    pub artifact_hash: String,
    pub final_loss: Option<LossBreakdown>,
    /// R² or macro F1 on the validation subjects, when defined.
    pub validation_score: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvResult {
    pub task: Task,
    /// Class names in index order (classification only).
    pub classes: Vec<String>,
    /// Pooled test predictions, fold by fold, in dataset order within a fold.
    pub predictions: Vec<Prediction>,
    pub metrics: BTreeMap<String, BootstrapCi>,
    pub regression: Option<RegressionMetrics>,
    pub classification: Option<ClassificationReport>,
    pub folds: Vec<FoldReport>,
}

impl CvResult {
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("subject_id,sequence_id,fold,y_true,y_pred\n");
        for p in &self.predictions {
            let (t, y) = match self.task {
                Task::Regression => (p.y_true.to_string(), p.y_pred.to_string()),
                Task::Classification => (
                    self.classes[p.y_true as usize].clone(),
                    self.classes[p.y_pred as usize].clone(),
                ),
            };
            out.push_str(&format!("{},{},{},{t},{y}\n", p.subject_id, p.sequence_id, p.fold));
        }
        out
    }
}

fn targets(data: &[RawSequence], task: Task) -> Result<(Vec<f64>, Vec<String>)> {
    match task {
        Task::Regression => {
            let y = data
                .iter()
                .map(|s| {
                    s.target
                        .ok_or_else(|| Error::InvalidInput(format!("{} has no target", s.key())))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((y, Vec::new()))
        }
        Task::Classification => {
            let labels = data
                .iter()
                .map(|s| {
                    s.label
                        .clone()
                        .ok_or_else(|| Error::InvalidInput(format!("{} has no label", s.key())))
                })
                .collect::<Result<Vec<_>>>()?;
            let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            if classes.len() < 2 {
                return Err(Error::InvalidInput("classification needs at least two classes".into()));
            }
            let y = labels
                .iter()
                .map(|l| classes.binary_search(l).expect("label collected") as f64)
                .collect();
            Ok((y, classes))
        }
    }
}

fn predict(
    train: &[(Vec<f64>, f64)],
    query: &[f64],
    task: Task,
    k: usize,
) -> Result<f64> {
    match task {
        Task::Regression => {
            let emb: Vec<LabeledEmbedding<f64>> = train
                .iter()
                .map(|(c, y)| LabeledEmbedding {
                    code: c.clone(),
                    subject_id: String::new(),
                    target: *y,
                })
                .collect();
            knn_regress(&emb, query, k)
        }
        Task::Classification => {
            let emb: Vec<LabeledEmbedding<usize>> = train
                .iter()
                .map(|(c, y)| LabeledEmbedding {
                    code: c.clone(),
                    subject_id: String::new(),
                    target: *y as usize,
                })
                .collect();
            Ok(knn_classify(&emb, query, k)? as f64)
        }
    }
}

fn score(task: Task, y_true: &[f64], y_pred: &[f64], n_classes: usize) -> Result<f64> {
    match task {
        Task::Regression => Ok(regression_metrics(y_true, y_pred)?.r2),
        Task::Classification => {
            let t: Vec<usize> = y_true.iter().map(|&v| v as usize).collect();
            let p: Vec<usize> = y_pred.iter().map(|&v| v as usize).collect();
            Ok(classification_metrics(&t, &p, n_classes)?.macro_avg.f1)
        }
    }
}

struct FoldOutput {
    fitted: FittedPipeline,
    predictions: Vec<Prediction>,
    report: FoldReport,
}

fn run_fold(
    data: &[RawSequence],
    y: &[f64],
    members: [&HashSet<&str>; 3],
    index: usize,
    pipeline: &PipelineConfig,
    cfg: &EvalConfig,
    n_classes: usize,
    cache: &AlignmentCache,
) -> Result<FoldOutput> {
    let pick = |set: &HashSet<&str>| -> Vec<usize> {
        (0..data.len()).filter(|&i| set.contains(data[i].subject_id.as_str())).collect()
    };
    let [train_set, val_set, test_set] = members;
    let (train_idx, val_idx, test_idx) = (pick(train_set), pick(val_set), pick(test_set));
    if test_idx.is_empty() {
        return Err(Error::EmptyTestFold { fold: index });
    }
    let mut fold_cfg = pipeline.clone();
    fold_cfg.training.rng_seed = substream_seed(cfg.seed, "fold", index as u64);
    let train_data: Vec<RawSequence> = train_idx.iter().map(|&i| data[i].clone()).collect();
    let fitted = fit_pipeline_cached(&train_data, &fold_cfg, Some(cache))?;
    let codes = fitted.embed_all(&train_data)?;
    let bank: Vec<(Vec<f64>, f64)> = codes.into_iter().zip(train_idx.iter().map(|&i| y[i])).collect();
    let predict_all = |idx: &[usize]| -> Result<Vec<f64>> {
        idx.par_iter()
            .map(|&i| predict(&bank, &fitted.embed(&data[i])?, cfg.task, cfg.k_neighbors))
            .collect()
    };
    let test_pred = predict_all(&test_idx)?;
    let validation_score = if val_idx.is_empty() {
        None
    } else {
        let vp = predict_all(&val_idx)?;
        let vt: Vec<f64> = val_idx.iter().map(|&i| y[i]).collect();
        score(cfg.task, &vt, &vp, n_classes).ok()
    };
    let predictions = test_idx
        .iter()
        .zip(&test_pred)
        .map(|(&i, &p)| Prediction {
            subject_id: data[i].subject_id.clone(),
            sequence_id: data[i].sequence_id.clone(),
            fold: index,
            y_true: y[i],
            y_pred: p,
        })
        .collect();
    let report = FoldReport {
        fold: index,
        n_train: train_idx.len(),
        n_validation: val_idx.len(),
        n_test: test_idx.len(),
        training_seed: fold_cfg.training.rng_seed,
        artifact_hash: fitted.content_hash()?,
        final_loss: fitted.history.last().copied(),
        validation_score,
    };
    Ok(FoldOutput {
        fitted,
        predictions,
        report,
    })
}

/// Fits the pipeline on each fold's training subjects only, predicts the
/// fold's test subjects by k-NN on posterior-mean codes, pools the test
/// predictions and attaches subject-level bootstrap intervals.
pub fn run_cross_validation(
    data: &[RawSequence],
    plan: &FoldPlan,
    pipeline: &PipelineConfig,
    cfg: &EvalConfig,
) -> Result<CvResult> {
    Ok(cross_validate(data, plan, pipeline, cfg, &AlignmentCache::new())?.0)
}

/// As [`run_cross_validation`], also returning the fitted pipeline of
/// every fold. Fold registrations are looked up in and added to `cache`.
pub fn cross_validate(
    data: &[RawSequence],
    plan: &FoldPlan,
    pipeline: &PipelineConfig,
    cfg: &EvalConfig,
    cache: &AlignmentCache,
) -> Result<(CvResult, Vec<FittedPipeline>)> {
    if cfg.k_neighbors == 0 {
        return Err(Error::InvalidInput("k_neighbors must be at least 1".into()));
    }
    plan.validate(&subjects_of(data))?;
    let (y, classes) = targets(data, cfg.task)?;
    let sets: Vec<[HashSet<&str>; 3]> = plan
        .folds
        .iter()
        .map(|f| {
            [as_set(&f.train), as_set(&f.validation), as_set(&f.test)]
        })
        .collect();
    let outputs = sets
        .par_iter()
        .enumerate()
        .map(|(i, [a, b, c])| run_fold(data, &y, [a, b, c], i, pipeline, cfg, classes.len(), cache))
        .collect::<Result<Vec<_>>>()?;
    let mut predictions = Vec::new();
    let mut folds = Vec::new();
    let mut fitted = Vec::new();
    for o in outputs {
        predictions.extend(o.predictions);
        folds.push(o.report);
        fitted.push(o.fitted);
    }
    let (metrics, regression, classification) = pooled_metrics(&predictions, cfg, classes.len())?;
    Ok((
        CvResult {
            task: cfg.task,
            classes,
            predictions,
            metrics,
            regression,
            classification,
            folds,
        },
        fitted,
    ))
}

fn as_set(v: &[String]) -> HashSet<&str> {
    v.iter().map(String::as_str).collect()
}

type Pooled = (
    BTreeMap<String, BootstrapCi>,
    Option<RegressionMetrics>,
    Option<ClassificationReport>,
);

fn pooled_metrics(predictions: &[Prediction], cfg: &EvalConfig, n_classes: usize) -> Result<Pooled> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for p in predictions {
        let g = groups.entry(p.subject_id.as_str()).or_default();
        if g.is_empty() {
            order.push(p.subject_id.as_str());
        }
        g.push((p.y_true, p.y_pred));
    }
    let grouped: Vec<Vec<(f64, f64)>> = order.iter().map(|s| groups[s].clone()).collect();
    let seed = substream_seed(cfg.seed, "bootstrap", 0);
    let split = |s: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) { s.iter().copied().unzip() };
    let mut metrics = BTreeMap::new();
    let reps = cfg.bootstrap_replicates;
    match cfg.task {
        Task::Regression => {
            let named: [(&str, fn(&RegressionMetrics) -> f64); 3] =
                [("rmse", |m| m.rmse), ("r2", |m| m.r2), ("pearson", |m| m.pearson)];
            for (name, get) in named {
                let ci = bootstrap_ci(
                    &grouped,
                    |s| {
                        let (t, p) = split(s);
                        regression_metrics(&t, &p).map(|m| get(&m))
                    },
                    reps,
                    seed,
                )?;
                metrics.insert(name.to_string(), ci);
            }
            let (t, p) = split(&grouped.concat());
            Ok((metrics, Some(regression_metrics(&t, &p)?), None))
        }
        Task::Classification => {
            let report = |s: &[(f64, f64)]| {
                let t: Vec<usize> = s.iter().map(|v| v.0 as usize).collect();
                let p: Vec<usize> = s.iter().map(|v| v.1 as usize).collect();
                classification_metrics(&t, &p, n_classes)
            };
            let named: [(&str, fn(&ClassificationReport) -> f64); 4] = [
                ("macro_f1", |r| r.macro_avg.f1),
                ("macro_precision", |r| r.macro_avg.precision),
                ("macro_recall", |r| r.macro_avg.recall),
                ("accuracy", |r| r.accuracy),
            ];
            for (name, get) in named {
                let ci = bootstrap_ci(&grouped, |s| report(s).map(|r| get(&r)), reps, seed)?;
                metrics.insert(name.to_string(), ci);
            }
            Ok((metrics, None, Some(report(&grouped.concat())?)))
        }
    }
}
