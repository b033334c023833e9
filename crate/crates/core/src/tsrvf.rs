//! Transported square-root velocity functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kendall::{self, PreShape, TangentVector};
use crate::trajectory::{covariant_velocity, Trajectory};
use crate::warp::WarpingFunction;

/// Speeds below this produce a zero TSRVF sample.
pub const ZERO_SPEED: f64 = 1e-12;

/// A TSRVF: `T` tangent vectors, all at one reference preshape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsrvfRep {
    q: Vec<TangentVector>,
    reference: PreShape,
}

impl TsrvfRep {
    pub fn new(q: Vec<TangentVector>, reference: PreShape) -> Result<Self> {
        if q.len() < 2 {
            return Err(Error::InvalidInput("a TSRVF needs at least 2 samples".into()));
        }
        for v in &q {
            if v.k() != reference.k() || v.m() != reference.m() {
                return Err(Error::mismatch(
                    format!("{}x{}", reference.k(), reference.m()),
                    format!("{}x{}", v.k(), v.m()),
                ));
            }
        }
        Ok(TsrvfRep { q, reference })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn samples(&self) -> &[TangentVector] {
        &self.q
    }

    pub fn reference(&self) -> &PreShape {
        &self.reference
    }

    /// Samples stacked into a `T × (k·m)` row-major buffer.
    pub fn to_flat(&self) -> Vec<f64> {
        self.q.iter().flat_map(|v| v.as_slice().iter().copied()).collect()
    }

    /// Trapezoid-free discrete energy `Σ‖q(tᵢ)‖² Δt`.
    pub fn energy(&self) -> f64 {
        let dt = 1.0 / (self.len() - 1) as f64;
        self.q.iter().map(|v| v.inner(v)).sum::<f64>() * dt
    }
}

/// Velocity transported to `reference` and divided by the square root of
/// its norm.
pub fn compute_tsrvf(traj: &Trajectory, reference: &PreShape) -> Result<TsrvfRep> {
    traj.frame(0).same_dims(reference)?;
    let velocity = covariant_velocity(traj)?;
    let last = traj.len() - 2;
    let q = velocity
        .vectors()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            // The replicated final velocity lives at the second-to-last frame.
            let frame = traj.frame(i.min(last));
            if v.norm() < ZERO_SPEED {
                return Ok(TangentVector::zeros(frame.k(), frame.m()));
            }
            let moved = kendall::transport_between_shapes(frame, reference, v)
                .map_err(|e| e.at_frame(i))?;
            let speed = moved.norm();
            Ok(moved.scaled(1.0 / speed.sqrt()))
        })
        .collect::<Result<_>>()?;
    Ok(TsrvfRep {
        q,
        reference: reference.clone(),
    })
}

/// Linear interpolation of flat `T × d` samples at fractional position `p`.
pub(crate) fn interp_into(flat: &[f64], d: usize, t: usize, p: f64, out: &mut [f64]) {
    let p = p.clamp(0.0, (t - 1) as f64);
    let i0 = (p.floor() as usize).min(t - 2);
    let frac = p - i0 as f64;
    let a = &flat[i0 * d..(i0 + 1) * d];
    let b = &flat[(i0 + 1) * d..(i0 + 2) * d];
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x + frac * (y - x);
    }
}

/// `(q ∘ γ)·√γ̇` on the grid, with linear interpolation of `q` and
/// forward-difference `γ̇`.
pub fn warp_action(q: &TsrvfRep, gamma: &WarpingFunction) -> Result<TsrvfRep> {
    if gamma.len() != q.len() {
        return Err(Error::mismatch(
            format!("{} samples", q.len()),
            format!("{} samples", gamma.len()),
        ));
    }
    let (t, k, m) = (q.len(), q.reference.k(), q.reference.m());
    let d = k * m;
    let flat = q.to_flat();
    let rate = gamma.derivative();
    let scale = (t - 1) as f64;
    let mut buf = vec![0.0; d];
    let out = gamma
        .values()
        .iter()
        .zip(&rate)
        .map(|(g, r)| {
            interp_into(&flat, d, t, g * scale, &mut buf);
            let s = r.max(0.0).sqrt();
            TangentVector::from_raw(k, m, buf.iter().map(|x| x * s).collect())
        })
        .collect::<Result<_>>()?;
    Ok(TsrvfRep {
        q: out,
        reference: q.reference.clone(),
    })
}

/// Discretized alignment cost `Σᵢ ‖a(tᵢ) − b(tᵢ)‖²`.
pub fn alignment_cost(a: &TsrvfRep, b: &TsrvfRep) -> f64 {
    a.q.iter()
        .zip(&b.q)
        .map(|(x, y)| {
            x.as_slice()
                .iter()
                .zip(y.as_slice())
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
        })
        .sum()
}
