//! Warping functions and the dynamic-programming search for the optimal
//! reparameterization between two TSRVFs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tsrvf::{interp_into, TsrvfRep};

/// Largest numerator/denominator of an admissible segment slope.
pub const MAX_SLOPE_STEP: usize = 6;

/// A nondecreasing map of `[0, 1]` onto itself, sampled on the uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpingFunction {
    values: Vec<f64>,
}

impl WarpingFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput("a warp needs at least 2 samples".into()));
        }
        if values[0] != 0.0 || values[values.len() - 1] != 1.0 {
            return Err(Error::InvalidInput("a warp must fix 0 and 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("a warp must be nondecreasing".into()));
        }
        Ok(WarpingFunction { values })
    }

    pub fn identity(t: usize) -> Self {
        let scale = (t - 1) as f64;
        let mut values: Vec<f64> = (0..t).map(|i| i as f64 / scale).collect();
        values[t - 1] = 1.0;
        WarpingFunction { values }
    }

    /// Samples `f` on the grid, pinning the endpoints.
    pub fn from_fn(t: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let scale = (t - 1) as f64;
        let mut values: Vec<f64> = (0..t).map(|i| f(i as f64 / scale)).collect();
        values[0] = 0.0;
        values[t - 1] = 1.0;
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Forward differences with the last entry repeated.
    pub fn derivative(&self) -> Vec<f64> {
        let scale = (self.len() - 1) as f64;
        let mut d: Vec<f64> = self
            .values
            .windows(2)
            .map(|w| (w[1] - w[0]) * scale)
            .collect();
        d.push(d[d.len() - 1]);
        d
    }

    /// Piecewise-linear inverse on the same grid.
    pub fn inverse(&self) -> WarpingFunction {
        let t = self.len();
        let scale = (t - 1) as f64;
        let mut values = Vec::with_capacity(t);
        let mut j = 0;
        for i in 0..t {
            let y = i as f64 / scale;
            while j + 1 < t - 1 && self.values[j + 1] < y {
                j += 1;
            }
            let (y0, y1) = (self.values[j], self.values[j + 1]);
            let x0 = j as f64 / scale;
            let v = if y1 > y0 {
                x0 + (y - y0) / (y1 - y0) / scale
            } else {
                x0
            };
            values.push(v.clamp(0.0, 1.0));
        }
        values[0] = 0.0;
        values[t - 1] = 1.0;
        WarpingFunction { values }
    }
}

/// Admissible lattice steps `(Δref, Δtarget)` with coprime components.
pub fn slope_steps() -> Vec<(usize, usize)> {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let mut steps = Vec::new();
    for a in 1..=MAX_SLOPE_STEP {
        for b in 1..=MAX_SLOPE_STEP {
            if gcd(a, b) == 1 {
                steps.push((a, b));
            }
        }
    }
    steps
}

/// Cost of the segment `(i0, j0) → (i1, j1)` over reference samples
/// `i0..i1`, plus the closing sample when the segment ends at the last node.
fn segment_cost(
    q_ref: &[f64],
    q_tgt: &[f64],
    d: usize,
    t: usize,
    from: (usize, usize),
    to: (usize, usize),
    buf: &mut [f64],
) -> f64 {
    let (a, b) = (to.0 - from.0, to.1 - from.1);
    let slope = b as f64 / a as f64;
    let root = slope.sqrt();
    let last = to.0 == t - 1 && to.1 == t - 1;
    let end = if last { to.0 + 1 } else { to.0 };
    let mut cost = 0.0;
    for s in from.0..end {
        let pos = from.1 as f64 + (s - from.0) as f64 * slope;
        interp_into(q_tgt, d, t, pos, buf);
        let r = &q_ref[s * d..(s + 1) * d];
        cost += r
            .iter()
            .zip(buf.iter())
            .map(|(x, y)| {
                let diff = x - y * root;
                diff * diff
            })
            .sum::<f64>();
    }
    cost
}

/// Warp `γ*` minimizing `Σᵢ ‖q_ref(tᵢ) − q_target(γ(tᵢ))·√γ̇(tᵢ)‖²` over
/// piecewise-linear warps whose segments join grid nodes with slopes from
/// [`slope_steps`].
pub fn optimal_warp(q_ref: &TsrvfRep, q_target: &TsrvfRep) -> Result<WarpingFunction> {
    Ok(optimal_warp_with_cost(q_ref, q_target)?.0)
}

/// As [`optimal_warp`], also returning the minimal cost.
pub fn optimal_warp_with_cost(
    q_ref: &TsrvfRep,
    q_target: &TsrvfRep,
) -> Result<(WarpingFunction, f64)> {
    let t = q_ref.len();
    if q_target.len() != t {
        return Err(Error::mismatch(
            format!("{t} samples"),
            format!("{} samples", q_target.len()),
        ));
    }
    q_ref.reference().same_dims(q_target.reference())?;
    let d = q_ref.reference().k() * q_ref.reference().m();
    let r = q_ref.to_flat();
    let g = q_target.to_flat();
    let steps = slope_steps();
    let mut buf = vec![0.0; d];

    let idx = |i: usize, j: usize| i * t + j;
    let mut cost = vec![f64::INFINITY; t * t];
    let mut back = vec![(0u8, 0u8); t * t];
    cost[0] = 0.0;
    for i in 1..t {
        for j in 1..t {
            // Only the final node may close the path; interior nodes on the
            // last row or column cannot reach it.
            if (i == t - 1) != (j == t - 1) {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut arg = (0u8, 0u8);
            for &(a, b) in &steps {
                if a > i || b > j {
                    continue;
                }
                let prev = cost[idx(i - a, j - b)];
                if !prev.is_finite() {
                    continue;
                }
                let c = prev + segment_cost(&r, &g, d, t, (i - a, j - b), (i, j), &mut buf);
                if c < best {
                    best = c;
                    arg = (a as u8, b as u8);
                }
            }
            cost[idx(i, j)] = best;
            back[idx(i, j)] = arg;
        }
    }

    let total = cost[idx(t - 1, t - 1)];
    let scale = (t - 1) as f64;
    let mut values = vec![0.0; t];
    let (mut i, mut j) = (t - 1, t - 1);
    while i > 0 {
        let (a, b) = back[idx(i, j)];
        let (a, b) = (a as usize, b as usize);
        let (i0, j0) = (i - a, j - b);
        let slope = b as f64 / a as f64;
        for s in i0..i {
            values[s] = (j0 as f64 + (s - i0) as f64 * slope) / scale;
        }
        i = i0;
        j = j0;
    }
    values[t - 1] = 1.0;
    Ok((WarpingFunction::new(values)?, total))
}
