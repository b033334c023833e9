use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{generate_labeled_trajectories, AlignmentStage, LabeledSpec};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, subjects_of, BootstrapCi, CvResult, EvalConfig, FoldPlan, Task};
use crate::pipeline::{AlignmentCache, PipelineConfig};
use crate::registration::RegistrationConfig;
use crate::rvae::{LossMode, TrainingConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub dataset: LabeledSpec,
    /// Base pipeline; the stage, loss mode and KL weight are overridden per row.
    pub pipeline: PipelineConfig,
    pub eval: EvalConfig,
    /// Subjects per held-out block.
    pub group_size: usize,
    pub stages: Vec<AlignmentStage>,
    /// Loss modes compared at the full alignment stage.
    pub loss_modes: Vec<LossMode>,
    /// KL weights swept at the full alignment stage with geodesic loss.
    pub kl_weights: Vec<f64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        let dataset = LabeledSpec::default();
        AblationConfig {
            pipeline: PipelineConfig {
                stage: AlignmentStage::KendallTsrvf,
                frames: dataset.frames,
                registration: RegistrationConfig {
                    max_iterations: 8,
                    step_size: 1.0,
                    ..Default::default()
                },
                training: TrainingConfig {
                    latent_dim: 8,
                    hidden: 32,
                    decoder_hidden: 32,
                    kl_weight: 1e-4,
                    epochs: 60,
                    batch_size: 16,
                    ..Default::default()
                },
            },
            eval: EvalConfig {
                task: Task::Classification,
                ..Default::default()
            },
            dataset,
            group_size: 5,
            stages: AlignmentStage::ALL.to_vec(),
            loss_modes: vec![LossMode::Geodesic, LossMode::TangentMse],
            kl_weights: vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `stage`, `loss_mode` or `kl_weight`.
    pub table: String,
    pub setting: String,
    pub metric: String,
    #[serde(flatten)]
    pub ci: BootstrapCi,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
}

impl AblationResult {
    pub fn get(&self, table: &str, setting: &str, metric: &str) -> Option<&BootstrapCi> {
        self.rows
            .iter()
            .find(|r| r.table == table && r.setting == setting && r.metric == metric)
            .map(|r| &r.ci)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("table,setting,metric,point,lo95,hi95\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.table, r.setting, r.metric, r.ci.point, r.ci.lo95, r.ci.hi95
            ));
        }
        out
    }
}

fn loss_name(m: LossMode) -> &'static str {
    match m {
        LossMode::Geodesic => "geodesic",
        LossMode::TangentMse => "tangent_mse",
    }
}

/// Cross-validated k-NN performance per alignment stage, per loss mode and
/// per KL weight on the synthetic labeled dataset.
pub fn run_ablation(cfg: &AblationConfig) -> Result<AblationResult> {
    let data = generate_labeled_trajectories(&cfg.dataset)?;
    let plan = FoldPlan::leave_subjects_out(&subjects_of(&data), cfg.group_size)?;
    let registrations = AlignmentCache::new();
    let mut cache: BTreeMap<String, CvResult> = BTreeMap::new();
    let mut run = |p: PipelineConfig| -> Result<BTreeMap<String, BootstrapCi>> {
        let key = serde_json::to_string(&p)?;
        if !cache.contains_key(&key) {
            let res = cross_validate(&data, &plan, &p, &cfg.eval, &registrations)?.0;
            cache.insert(key.clone(), res);
        }
        Ok(cache[&key].metrics.clone())
    };
    let mut rows = Vec::new();
    let mut push = |table: &str, setting: String, metrics: BTreeMap<String, BootstrapCi>| {
        for (metric, ci) in metrics {
            rows.push(AblationRow {
                table: table.to_string(),
                setting: setting.clone(),
                metric,
                ci,
            });
        }
    };
    let full = PipelineConfig {
        stage: AlignmentStage::KendallTsrvf,
        ..cfg.pipeline.clone()
    };
    for &stage in &cfg.stages {
        let m = run(PipelineConfig {
            stage,
            ..cfg.pipeline.clone()
        })?;
        push("stage", stage.to_string(), m);
    }
    for &mode in &cfg.loss_modes {
        let mut p = full.clone();
        p.training.loss_mode = mode;
        push("loss_mode", loss_name(mode).to_string(), run(p)?);
    }
    for &beta in &cfg.kl_weights {
        if !(beta >= 0.0) {
            return Err(Error::InvalidInput(format!("kl weight {beta} must be non-negative")));
        }
        let mut p = full.clone();
        p.training.kl_weight = beta;
        p.training.loss_mode = LossMode::Geodesic;
        push("kl_weight", format!("{beta:e}"), run(p)?);
    }
    Ok(AblationResult { rows })
}
