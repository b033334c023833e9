//! Landmark-sequence datasets: file formats, synthetic generators and the
//! alignment-stage preprocessor.

mod io;
mod preprocess;
mod synthetic;

pub use io::{load_sequences, save_sequences, FileFormat};
pub use preprocess::{preprocess, resample_coordinates, AlignmentStage, Prepared, Standardizer};
pub use synthetic::{
    class_prototype, generate_labeled_trajectories, generate_sphere_dataset, sphere_curve, LabeledSpec, Nuisance, SphereDataset,
    SphereDatasetSpec,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kendall::{self, Configuration};
use crate::trajectory::Trajectory;

/// One recorded motion: `len()` frames of `k` landmarks in `m` dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSequence {
    pub subject_id: String,
    /// Distinguishes several sequences of one subject; empty when unused.
    pub sequence_id: String,
    pub k: usize,
    pub m: usize,
    /// Row-major `frames × k × m`.
    pub data: Vec<f64>,
    pub target: Option<f64>,
    pub label: Option<String>,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl RawSequence {
    pub fn new(subject_id: impl Into<String>, k: usize, m: usize, data: Vec<f64>) -> Result<Self> {
        let seq = RawSequence {
            subject_id: subject_id.into(),
            sequence_id: String::new(),
            k,
            m,
            data,
            target: None,
            label: None,
            meta: BTreeMap::new(),
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.subject_id.is_empty() {
            return Err(Error::InvalidInput("empty subject id".into()));
        }
        let frame = self.k * self.m;
        if frame == 0 || self.data.len() % frame != 0 {
            return Err(Error::RaggedData {
                subject: self.subject_id.clone(),
                frame: 0,
                detail: format!("{} values do not form {}x{} frames", self.data.len(), self.k, self.m),
            });
        }
        if self.len() < 2 {
            return Err(Error::InvalidInput(format!("subject {}: fewer than 2 frames", self.subject_id)));
        }
        if let Some(i) = self.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::RaggedData {
                subject: self.subject_id.clone(),
                frame: i / frame,
                detail: "non-finite coordinate".into(),
            });
        }
        if self.target.is_some_and(|t| !t.is_finite()) {
            return Err(Error::InvalidInput(format!("subject {}: non-finite target", self.subject_id)));
        }
        Ok(())
    }

    /// Number of frames.
    pub fn len(&self) -> usize {
        self.data.len() / (self.k * self.m).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.k * self.m;
        &self.data[t * n..(t + 1) * n]
    }

    /// Display key `subject` or `subject/sequence`.
    pub fn key(&self) -> String {
        if self.sequence_id.is_empty() {
            self.subject_id.clone()
        } else {
            format!("{}/{}", self.subject_id, self.sequence_id)
        }
    }

    /// Per-frame preshapes.
    pub fn to_trajectory(&self) -> Result<Trajectory> {
        let frames = (0..self.len())
            .map(|t| {
                let cfg = Configuration::new(self.k, self.m, self.frame(t).to_vec())?;
                kendall::to_preshape(&cfg)
            })
            .enumerate()
            .map(|(t, r)| r.map_err(|e| e.at_frame(t)))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::InvalidInput(format!("sequence {}: {e}", self.key())))?;
        Trajectory::new(frames)
    }
}
