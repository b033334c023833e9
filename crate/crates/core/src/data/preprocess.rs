use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RawSequence;
use crate::error::{Error, Result};
use crate::kendall::{self, Configuration};
use crate::registration::AlignmentTarget;
use crate::trajectory::{TangentField, Trajectory};

/// How much geometric normalization is applied before modelling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentStage {
    None,
    Center,
    Preshape,
    Kendall,
    KendallTsrvf,
}

impl AlignmentStage {
    pub const ALL: [AlignmentStage; 5] = [
        AlignmentStage::None,
        AlignmentStage::Center,
        AlignmentStage::Preshape,
        AlignmentStage::Kendall,
        AlignmentStage::KendallTsrvf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlignmentStage::None => "none",
            AlignmentStage::Center => "center",
            AlignmentStage::Preshape => "preshape",
            AlignmentStage::Kendall => "kendall",
            AlignmentStage::KendallTsrvf => "kendall_tsrvf",
        }
    }

    /// Stages that need a registered mean and produce tangent fields.
    pub fn uses_registration(self) -> bool {
        matches!(self, AlignmentStage::Kendall | AlignmentStage::KendallTsrvf)
    }

    pub fn temporal(self) -> bool {
        self == AlignmentStage::KendallTsrvf
    }
}

impl fmt::Display for AlignmentStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlignmentStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlignmentStage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown alignment stage `{s}`")))
    }
}

/// Model-ready form of one sequence.
#[derive(Clone, Debug)]
pub enum Prepared {
    /// Flattened `T × k × m` coordinates.
    Coordinates(Vec<f64>),
    /// Shooting vector at the fold mean and the aligned trajectory it reaches.
    Field { field: TangentField, aligned: Trajectory },
}

impl Prepared {
    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            Prepared::Coordinates(c) => c.clone(),
            Prepared::Field { field, .. } => field.to_flat(),
        }
    }
}

/// Linear interpolation of raw coordinates onto `t` equally spaced frames.
/// Returns the input unchanged when `t` equals its length.
pub fn resample_coordinates(raw: &RawSequence, t: usize) -> Result<Vec<f64>> {
    if t < 2 {
        return Err(Error::InvalidInput("need at least 2 output frames".into()));
    }
    let n = raw.len();
    if t == n {
        return Ok(raw.data.clone());
    }
    let size = raw.k * raw.m;
    let mut out = Vec::with_capacity(t * size);
    for i in 0..t {
        let pos = i as f64 * (n - 1) as f64 / (t - 1) as f64;
        let lo = (pos.floor() as usize).min(n - 2);
        let frac = pos - lo as f64;
        let (a, b) = (raw.frame(lo), raw.frame(lo + 1));
        if frac == 0.0 {
            out.extend_from_slice(a);
        } else if frac == 1.0 {
            out.extend_from_slice(b);
        } else {
            out.extend(a.iter().zip(b).map(|(x, y)| x + frac * (y - x)));
        }
    }
    Ok(out)
}

fn frames_to_trajectory(raw: &RawSequence, coords: &[f64]) -> Result<Trajectory> {
    let size = raw.k * raw.m;
    let frames = coords
        .chunks(size)
        .enumerate()
        .map(|(t, c)| {
            Configuration::new(raw.k, raw.m, c.to_vec())
                .and_then(|cfg| kendall::to_preshape(&cfg))
                .map_err(|e| e.at_frame(t))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::InvalidInput(format!("sequence {}: {e}", raw.key())))?;
    Trajectory::new(frames)
}

/// Applies an alignment stage to a raw sequence resampled to `t` frames.
/// The two registration stages need the fold's fitted alignment target.
pub fn preprocess(raw: &RawSequence, stage: AlignmentStage, t: usize, context: Option<&AlignmentTarget>) -> Result<Prepared> {
    let coords = resample_coordinates(raw, t)?;
    match stage {
        AlignmentStage::None => Ok(Prepared::Coordinates(coords)),
        AlignmentStage::Center => {
            let size = raw.k * raw.m;
            let mut out = Vec::with_capacity(coords.len());
            for c in coords.chunks(size) {
                let cfg = Configuration::new(raw.k, raw.m, c.to_vec())?;
                out.extend_from_slice(kendall::center(&cfg).as_slice());
            }
            Ok(Prepared::Coordinates(out))
        }
        AlignmentStage::Preshape => Ok(Prepared::Coordinates(frames_to_trajectory(raw, &coords)?.to_flat())),
        AlignmentStage::Kendall | AlignmentStage::KendallTsrvf => {
            let ctx = context
                .filter(|c| c.temporal() == stage.temporal())
                .ok_or_else(|| Error::MissingContext(stage.name().into()))?;
            let traj = frames_to_trajectory(raw, &coords)?;
            let aligned = ctx.align(&traj)?.aligned;
            let field = ctx.shooting(&aligned)?;
            Ok(Prepared::Field { field, aligned })
        }
    }
}

/// Per-entry z-scoring fitted on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Entries with (near) zero spread get scale 1.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyTrainingSet)?;
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged standardization input".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            mean.iter_mut().zip(r).for_each(|(m, x)| *m += x / n);
        }
        let mut var = vec![0.0; d];
        for r in rows {
            var.iter_mut().zip(r).zip(&mean).for_each(|((v, x), m)| *v += (x - m) * (x - m) / n);
        }
        let scale = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}
