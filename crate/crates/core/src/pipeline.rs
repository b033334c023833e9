//! A fitted preprocessing + autoencoder pipeline: everything needed to turn
//! a raw sequence into a latent code, and its on-disk archive.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{preprocess, AlignmentStage, Prepared, RawSequence, Standardizer};
use crate::error::{Error, Result};
use crate::registration::{register_collection, AlignmentTarget, RegistrationConfig};
use crate::rvae::{encode_mean, reorder_latents, train, LossBreakdown, NetworkParams, OutputGeometry, Sample, TrainingConfig};
use crate::trajectory::Trajectory;

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub stage: AlignmentStage,
    /// Common sequence length after resampling.
    pub frames: usize,
    pub registration: RegistrationConfig,
    pub training: TrainingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stage: AlignmentStage::KendallTsrvf,
            frames: 200,
            registration: RegistrationConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::InvalidInput("frames must be at least 2".into()));
        }
        self.registration.validate()?;
        self.training.validate()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedPipeline {
    pub format_version: u32,
    pub config: PipelineConfig,
    /// Registered fold mean; present for the two registration stages.
    pub alignment: Option<AlignmentTarget>,
    pub standardizer: Standardizer,
    /// Encoder/decoder with latent dimensions sorted by decreasing variance.
    pub params: NetworkParams,
    /// Original latent index of each reordered dimension.
    pub latent_order: Vec<usize>,
    pub history: Vec<LossBreakdown>,
}

fn prepare(seq: &RawSequence, cfg: &PipelineConfig, ctx: Option<&AlignmentTarget>) -> Result<Prepared> {
    preprocess(seq, cfg.stage, cfg.frames, ctx).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(format!("{}: {msg}", seq.key())),
        other => other,
    })
}

/// Memo of fold registrations, keyed by the training subjects and the
/// settings that determine the result. Shared across runs that differ only
/// in model settings.
#[derive(Debug, Default)]
pub struct AlignmentCache {
    entries: Mutex<HashMap<String, AlignmentTarget>>,
}

impl AlignmentCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Registered fold mean for the registration stages, `None` otherwise.
pub fn fit_alignment(train_set: &[RawSequence], cfg: &PipelineConfig, cache: Option<&AlignmentCache>) -> Result<Option<AlignmentTarget>> {
    if !cfg.stage.uses_registration() {
        return Ok(None);
    }
    let reg_cfg = RegistrationConfig {
        dp_enabled: cfg.registration.dp_enabled && cfg.stage.temporal(),
        ..cfg.registration.clone()
    };
    let key = {
        let keys: Vec<String> = train_set.iter().map(RawSequence::key).collect();
        let raw = serde_json::to_vec(&(&keys, cfg.frames, cfg.stage.temporal(), &reg_cfg))?;
        let mut h = Sha256::new();
        h.update(&raw);
        for s in train_set {
            for v in &s.data {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    };
    if let Some(hit) = cache.and_then(|c| c.entries.lock().expect("cache lock").get(&key).cloned()) {
        return Ok(Some(hit));
    }
    let preshape = PipelineConfig {
        stage: AlignmentStage::Preshape,
        ..cfg.clone()
    };
    let trajs = train_set
        .par_iter()
        .map(|s| prepare(s, &preshape, None).and_then(|p| flat_to_trajectory(&p.to_flat(), cfg.frames, s.k, s.m)))
        .collect::<Result<Vec<_>>>()?;
    let target = register_collection(&trajs, &reg_cfg)?.alignment_target(cfg.stage.temporal())?;
    if let Some(c) = cache {
        c.entries.lock().expect("cache lock").insert(key, target.clone());
    }
    Ok(Some(target))
}

/// Registers (when the stage needs it), standardizes and trains on
/// `train_set`. Nothing outside `train_set` is read.
pub fn fit_pipeline(train_set: &[RawSequence], cfg: &PipelineConfig) -> Result<FittedPipeline> {
    fit_pipeline_cached(train_set, cfg, None)
}

/// As [`fit_pipeline`], reusing registrations from `cache`.
pub fn fit_pipeline_cached(train_set: &[RawSequence], cfg: &PipelineConfig, cache: Option<&AlignmentCache>) -> Result<FittedPipeline> {
    cfg.validate()?;
    if train_set.len() < 2 {
        return Err(Error::EmptyTrainingSet);
    }
    let alignment = fit_alignment(train_set, cfg, cache)?;
    let prepared = train_set
        .par_iter()
        .map(|s| prepare(s, cfg, alignment.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<Vec<f64>> = prepared.iter().map(Prepared::to_flat).collect();
    let standardizer = Standardizer::fit(&inputs)?;
    let samples: Vec<Sample> = prepared
        .iter()
        .zip(&inputs)
        .map(|(p, x)| {
            let input = standardizer.apply(x);
            let target = match p {
                Prepared::Field { aligned, .. } => aligned.to_flat(),
                Prepared::Coordinates(_) => input.clone(),
            };
            Sample { input, target }
        })
        .collect();
    let geometry = match &alignment {
        Some(a) => OutputGeometry::Kendall { mean: a.mean().clone() },
        None => OutputGeometry::Euclidean,
    };
    let model = train(&samples, &geometry, &cfg.training)?;
    let codes = samples
        .iter()
        .map(|s| encode_mean(&model.params, &s.input))
        .collect::<Result<Vec<_>>>()?;
    let (latent_order, params, _) = reorder_latents(&model.params, &codes)?;
    Ok(FittedPipeline {
        format_version: ARCHIVE_VERSION,
        config: cfg.clone(),
        alignment,
        standardizer,
        params,
        latent_order,
        history: model.history,
    })
}

fn flat_to_trajectory(flat: &[f64], t: usize, k: usize, m: usize) -> Result<Trajectory> {
    let size = k * m;
    if flat.len() != t * size {
        return Err(Error::mismatch(t * size, flat.len()));
    }
    Trajectory::new(
        flat.chunks(size)
            .map(|c| crate::kendall::PreShape::renormalized(k, m, c.to_vec()))
            .collect(),
    )
}

impl FittedPipeline {
    pub fn geometry(&self) -> OutputGeometry {
        match &self.alignment {
            Some(a) => OutputGeometry::Kendall { mean: a.mean().clone() },
            None => OutputGeometry::Euclidean,
        }
    }

    /// Standardized encoder input for one sequence.
    pub fn encoder_input(&self, seq: &RawSequence) -> Result<Vec<f64>> {
        let p = prepare(seq, &self.config, self.alignment.as_ref())?;
        Ok(self.standardizer.apply(&p.to_flat()))
    }

    /// Posterior-mean latent code.
    pub fn embed(&self, seq: &RawSequence) -> Result<Vec<f64>> {
        Ok(encode_mean(&self.params, &self.encoder_input(seq)?)?.posterior_mean)
    }

    pub fn embed_all(&self, seqs: &[RawSequence]) -> Result<Vec<Vec<f64>>> {
        seqs.par_iter().map(|s| self.embed(s)).collect()
    }

    /// SHA-256 of the archive bytes.
    pub fn content_hash(&self) -> Result<String> {
        Ok(sha256_hex(&serde_json::to_vec(self)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let probe: serde_json::Value = serde_json::from_slice(&bytes)?;
        let found = probe.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != ARCHIVE_VERSION {
            return Err(Error::ArchiveVersion {
                found,
                expected: ARCHIVE_VERSION,
            });
        }
        let p: FittedPipeline = serde_json::from_value(probe)?;
        p.params.validate()?;
        Ok(p)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
