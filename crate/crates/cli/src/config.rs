use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use elastic_shape::data::{AlignmentStage, FileFormat, LabeledSpec};
use elastic_shape::eval::{EvalConfig, Task};
use elastic_shape::experiments::{AblationConfig, SphereDemoConfig};
use elastic_shape::pipeline::PipelineConfig;
use elastic_shape::rvae::{LossMode, TrainingConfig};
use elastic_shape::seeds::substream_seed;
use elastic_shape::RegistrationConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("configuration key `{key}`: {message}")]
    Field { key: String, message: String },
    #[error("cannot read configuration {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Sequence file; the synthetic labeled dataset is used when absent.
    pub path: Option<PathBuf>,
    /// Inferred from the extension when absent.
    pub format: Option<FileFormat>,
    pub synthetic: LabeledSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            format: None,
            synthetic: LabeledSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignmentSection {
    pub stage: AlignmentStage,
    pub frames: usize,
}

impl Default for AlignmentSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        AlignmentSection {
            stage: p.stage,
            frames: p.frames,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub latent_dim: usize,
    pub hidden: usize,
    pub decoder_hidden: usize,
    pub loss_mode: LossMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub kl_weight: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 means full-batch.
    pub batch_size: usize,
    pub dropout_rate: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        ModelSection {
            latent_dim: t.latent_dim,
            hidden: t.hidden,
            decoder_hidden: t.decoder_hidden,
            loss_mode: t.loss_mode,
        }
    }
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        TrainingSection {
            kl_weight: t.kl_weight,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            dropout_rate: t.dropout_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FoldSpec {
    /// Leave five subjects out.
    L5so,
    LeaveOut { group: usize },
    KFold { k: usize },
    /// 30 folds of near-equal size.
    Stroke30,
    /// A JSON fold plan: `{"folds": [{"train": [...], "validation": [...], "test": [...]}]}`.
    Custom { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub task: Task,
    pub k_neighbors: usize,
    pub bootstrap_replicates: usize,
    pub folds: FoldSpec,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        EvalSection {
            task: e.task,
            k_neighbors: e.k_neighbors,
            bootstrap_replicates: e.bootstrap_replicates,
            folds: FoldSpec::Stroke30,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentsSection {
    pub sphere_demo: SphereDemoConfig,
    pub ablation: AblationConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub alignment: AlignmentSection,
    pub registration: RegistrationConfig,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub eval: EvalSection,
    pub experiments: ExperimentsSection,
    pub output_dir: Option<PathBuf>,
    /// Root of every random stream.
    pub seed: u64,
}

/// Seeds of the named substreams of the root seed. Seed fields inside the
/// sections are replaced by these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub root: u64,
    pub data: u64,
    pub training: u64,
    pub eval: u64,
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Invalid(format!("malformed key `{key}`")));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                return Err(ConfigError::Field {
                    key: parts[..i].join("."),
                    message: "is not a section".into(),
                });
            }
        }
        let obj = node.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("nonempty key")
}

impl RunConfig {
    /// Configuration file (or defaults) with `KEY=VALUE` overrides applied.
    /// Values parse as JSON, falling back to a plain string.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut root = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?;
                serde_json::from_str(&text).map_err(|e| ConfigError::Read {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| ConfigError::Invalid(format!("override `{o}` is not KEY=VALUE")))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            set_path(&mut root, k.trim(), value)?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(root).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner().to_string();
            ConfigError::Field { key, message: inner }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.eval.k_neighbors == 0 || self.eval.bootstrap_replicates == 0 {
            return Err(ConfigError::Invalid("eval.k_neighbors and eval.bootstrap_replicates must be positive".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            root: self.seed,
            data: substream_seed(self.seed, "data", 0),
            training: substream_seed(self.seed, "training", 0),
            eval: substream_seed(self.seed, "eval", 0),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            stage: self.alignment.stage,
            frames: self.alignment.frames,
            registration: self.registration.clone(),
            training: TrainingConfig {
                latent_dim: self.model.latent_dim,
                hidden: self.model.hidden,
                decoder_hidden: self.model.decoder_hidden,
                loss_mode: self.model.loss_mode,
                kl_weight: self.training.kl_weight,
                learning_rate: self.training.learning_rate,
                epochs: self.training.epochs,
                batch_size: self.training.batch_size,
                dropout_rate: self.training.dropout_rate,
                rng_seed: self.seeds().training,
            },
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            task: self.eval.task,
            k_neighbors: self.eval.k_neighbors,
            bootstrap_replicates: self.eval.bootstrap_replicates,
            seed: self.seeds().eval,
        }
    }
}
