//! Trajectories of preshapes on a uniform time grid and tangent fields
//! along them.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kendall::{self, PreShape, TangentVector};
use crate::sphere;
use crate::warp::WarpingFunction;

/// `T ≥ 2` preshapes sampled at `t_i = i/(T−1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    frames: Vec<PreShape>,
}

impl Trajectory {
    pub fn new(frames: Vec<PreShape>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a trajectory needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        for f in &frames[1..] {
            frames[0].same_dims(f)?;
        }
        Ok(Trajectory { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn k(&self) -> usize {
        self.frames[0].k()
    }

    pub fn m(&self) -> usize {
        self.frames[0].m()
    }

    pub fn frames(&self) -> &[PreShape] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &PreShape {
        &self.frames[i]
    }

    pub fn into_frames(self) -> Vec<PreShape> {
        self.frames
    }

    /// Fails on the first consecutive pair at least a quarter turn apart.
    pub fn check_continuity(&self) -> Result<()> {
        for (i, w) in self.frames.windows(2).enumerate() {
            let d = kendall::preshape_distance(&w[0], &w[1]);
            if d >= FRAC_PI_2 {
                return Err(Error::InvalidInput(format!(
                    "frames {i} and {} are {d:.3} rad apart",
                    i + 1
                ))
                .at_frame(i + 1));
            }
        }
        Ok(())
    }

    /// Rotates every frame onto its predecessor so that consecutive
    /// representatives are in optimal relative position. The first frame is
    /// kept as is.
    pub fn rotation_continuous(&self) -> Trajectory {
        let mut frames = Vec::with_capacity(self.len());
        frames.push(self.frames[0].clone());
        for f in &self.frames[1..] {
            let prev = frames.last().expect("nonempty");
            frames.push(kendall::align_to(prev, f));
        }
        Trajectory { frames }
    }

    /// Each frame rotated into optimal position against the matching frame
    /// of `target`.
    pub fn aligned_to(&self, target: &Trajectory) -> Result<Trajectory> {
        check_same_len(self.len(), target.len())?;
        let frames = self
            .frames
            .iter()
            .zip(&target.frames)
            .map(|(f, t)| kendall::align_to(t, f))
            .collect();
        Ok(Trajectory { frames })
    }

    /// Flattened `(t, landmark, coordinate)` coordinates.
    pub fn to_flat(&self) -> Vec<f64> {
        self.frames.iter().flat_map(|f| f.as_slice().iter().copied()).collect()
    }
}

/// One tangent vector per frame of a base trajectory. The base is not
/// stored; operations take it explicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentField {
    vectors: Vec<TangentVector>,
}

impl TangentField {
    pub fn new(vectors: Vec<TangentVector>) -> Self {
        TangentField { vectors }
    }

    pub fn zeros(t: usize, k: usize, m: usize) -> Self {
        TangentField {
            vectors: vec![TangentVector::zeros(k, m); t],
        }
    }

    pub fn from_flat(t: usize, k: usize, m: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != t * k * m {
            return Err(Error::mismatch(t * k * m, flat.len()));
        }
        let vectors = flat
            .chunks(k * m)
            .map(|c| TangentVector::from_raw(k, m, c.to_vec()))
            .collect::<Result<_>>()?;
        Ok(TangentField { vectors })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.vectors
            .iter()
            .flat_map(|v| v.as_slice().iter().copied())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[TangentVector] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &TangentVector {
        &self.vectors[i]
    }

    /// Frobenius norm over all frames.
    pub fn norm(&self) -> f64 {
        self.vectors
            .iter()
            .map(|v| v.inner(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, s: f64) -> TangentField {
        TangentField {
            vectors: self.vectors.iter().map(|v| v.scaled(s)).collect(),
        }
    }

    /// Element-wise mean of fields sharing one base.
    pub fn mean(fields: &[TangentField]) -> Result<TangentField> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidInput("mean of zero tangent fields".into()))?;
        let (t, k, m) = (first.len(), first.vectors[0].k(), first.vectors[0].m());
        let mut acc = vec![0.0; t * k * m];
        for f in fields {
            let flat = f.to_flat();
            if flat.len() != acc.len() {
                return Err(Error::mismatch(acc.len(), flat.len()));
            }
            acc.iter_mut().zip(flat).for_each(|(a, x)| *a += x);
        }
        let n = fields.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        TangentField::from_flat(t, k, m, &acc)
    }

    pub fn is_tangent_along(&self, base: &Trajectory, tol: f64) -> bool {
        self.len() == base.len()
            && self
                .vectors
                .iter()
                .zip(base.frames())
                .all(|(v, f)| v.is_tangent_at(f, tol))
    }
}

fn check_same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::mismatch(format!("{a} frames"), format!("{b} frames")));
    }
    Ok(())
}

/// Frame-wise logarithm. Frames of `x` are assumed already rotated into
/// position against `base`.
pub fn trajectory_log(base: &Trajectory, x: &Trajectory) -> Result<TangentField> {
    check_same_len(base.len(), x.len())?;
    let vectors = base
        .frames
        .iter()
        .zip(&x.frames)
        .enumerate()
        .map(|(i, (b, f))| kendall::log_map(b, f).map_err(|e| e.at_frame(i)))
        .collect::<Result<_>>()?;
    Ok(TangentField { vectors })
}

/// Frame-wise exponential.
pub fn trajectory_exp(base: &Trajectory, field: &TangentField) -> Result<Trajectory> {
    check_same_len(base.len(), field.len())?;
    let frames = base
        .frames
        .iter()
        .zip(&field.vectors)
        .enumerate()
        .map(|(i, (b, v))| kendall::exp_map(b, v).map_err(|e| e.at_frame(i)))
        .collect::<Result<_>>()?;
    Ok(Trajectory { frames })
}

/// Forward-difference covariant derivative `Log_{β(tᵢ)}(β(tᵢ₊₁))/Δt`.
///
/// The last sample is a copy of the one before it and is therefore tangent
/// at frame `T−2`, not at the final frame.
pub fn covariant_velocity(traj: &Trajectory) -> Result<TangentField> {
    let t = traj.len();
    let scale = (t - 1) as f64;
    let mut vectors = Vec::with_capacity(t);
    for i in 0..t - 1 {
        let v = kendall::log_map(&traj.frames[i], &traj.frames[i + 1])
            .map_err(|e| e.at_frame(i + 1))?;
        vectors.push(v.scaled(scale));
    }
    let last = vectors[t - 2].clone();
    vectors.push(last);
    Ok(TangentField { vectors })
}

/// Geodesic interpolation of the trajectory at fractional grid positions
/// `p ∈ [0, T−1]`.
fn sample_at(traj: &Trajectory, positions: impl Iterator<Item = f64>) -> Result<Trajectory> {
    let t = traj.len();
    let (k, m) = (traj.k(), traj.m());
    let frames = positions
        .map(|p| {
            let p = p.clamp(0.0, (t - 1) as f64);
            let i0 = (p.floor() as usize).min(t - 2);
            let frac = p - i0 as f64;
            if frac == 0.0 {
                return Ok(traj.frames[i0].clone());
            }
            if frac == 1.0 {
                return Ok(traj.frames[i0 + 1].clone());
            }
            let a = traj.frames[i0].as_slice();
            let b = traj.frames[i0 + 1].as_slice();
            let data = sphere::slerp(a, b, frac).map_err(|e| e.at_frame(i0 + 1))?;
            Ok(PreShape::renormalized(k, m, data))
        })
        .collect::<Result<_>>()?;
    Ok(Trajectory { frames })
}

/// `β ∘ γ`: each output frame is the spherical interpolation between the
/// two input frames bracketing `γ(tᵢ)`.
pub fn apply_warp(traj: &Trajectory, gamma: &WarpingFunction) -> Result<Trajectory> {
    check_same_len(traj.len(), gamma.len())?;
    let scale = (traj.len() - 1) as f64;
    sample_at(traj, gamma.values().iter().map(|g| g * scale))
}

/// Geodesic resampling onto a uniform grid of `t_new` samples.
pub fn resample_trajectory(traj: &Trajectory, t_new: usize) -> Result<Trajectory> {
    if t_new < 2 {
        return Err(Error::InvalidInput(format!(
            "resampling needs at least 2 samples, got {t_new}"
        )));
    }
    if t_new == traj.len() {
        return Ok(traj.clone());
    }
    let scale = (traj.len() - 1) as f64 / (t_new - 1) as f64;
    sample_at(traj, (0..t_new).map(|i| i as f64 * scale))
}
