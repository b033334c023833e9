//! Closed-form geometry of the unit sphere in a flat coordinate vector.
//!
//! Points are unit vectors stored as slices; tangent vectors at `x` are
//! vectors orthogonal to `x`. The preshape sphere is the special case of
//! centered `k×m` matrices flattened row-major, so every Kendall operation
//! bottoms out here. The sphere demo uses the same functions on `S²`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Below this geodesic length two points are treated as coincident.
pub const ZERO_GEODESIC: f64 = 1e-12;

/// Points closer than this to antipodal have no unique logarithm.
pub const ANTIPODAL_MARGIN: f64 = 1e-6;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Great-circle distance `arccos⟨a, b⟩` between unit vectors.
///
/// Evaluated as `2·atan2(‖a − b‖, ‖a + b‖)`, which equals the arccos form
/// for unit vectors but does not lose half the digits near 0 and π.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Removes the component of `a` along the unit vector `base`.
pub fn project_tangent(base: &[f64], a: &[f64]) -> Vec<f64> {
    let c = dot(base, a);
    a.iter().zip(base).map(|(ai, bi)| ai - c * bi).collect()
}

/// `cos‖w‖·base + sin‖w‖·w/‖w‖`.
///
/// Tiny tangent vectors fall back to `base + w` renormalized, which agrees
/// with the closed form to second order.
pub fn exp(base: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let theta = norm(w);
    if !theta.is_finite() || theta >= PI {
        return Err(Error::OutOfInjectivityRadius { norm: theta });
    }
    if theta == 0.0 {
        return Ok(base.to_vec());
    }
    if theta < ZERO_GEODESIC {
        let mut out: Vec<f64> = base.iter().zip(w).map(|(b, v)| b + v).collect();
        let n = norm(&out);
        out.iter_mut().for_each(|x| *x /= n);
        return Ok(out);
    }
    let (s, c) = theta.sin_cos();
    Ok(base
        .iter()
        .zip(w)
        .map(|(b, v)| c * b + s * v / theta)
        .collect())
}

/// Inverse of [`exp`]: the tangent vector at `base` pointing to `x` with
/// length equal to their geodesic distance.
pub fn log(base: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let c = dot(base, x);
    let u: Vec<f64> = x.iter().zip(base).map(|(xi, bi)| xi - c * bi).collect();
    let s = norm(&u);
    // atan2 keeps full precision near 0 and π where arccos does not.
    let theta = s.atan2(c);
    if theta > PI - ANTIPODAL_MARGIN {
        return Err(Error::AntipodalPoints { distance: theta });
    }
    if theta < ZERO_GEODESIC || s == 0.0 {
        return Ok(vec![0.0; base.len()]);
    }
    let scale = theta / s;
    Ok(u.into_iter().map(|v| v * scale).collect())
}

/// Parallel transport of `w` from `from` to `to` along the minimizing geodesic.
pub fn transport(from: &[f64], to: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let u = log(from, to)?;
    let theta = norm(&u);
    if theta < ZERO_GEODESIC {
        return Ok(w.to_vec());
    }
    let (s, c) = theta.sin_cos();
    let uw = dot(&u, w) / theta;
    Ok(w.iter()
        .zip(&u)
        .zip(from)
        .map(|((wi, ui), fi)| wi + (c - 1.0) * uw * ui / theta - s * uw * fi)
        .collect())
}

/// Point at fraction `s` of the geodesic from `a` to `b`.
pub fn slerp(a: &[f64], b: &[f64], s: f64) -> Result<Vec<f64>> {
    if s == 0.0 {
        return Ok(a.to_vec());
    }
    if s == 1.0 {
        return Ok(b.to_vec());
    }
    let v = log(a, b)?;
    let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
    exp(a, &scaled)
}

/// Pulls a cotangent at `exp(base, w)` back to the tangent space at `base`.
///
/// This is the adjoint of the differential of the exponential map. Along the
/// shooting direction the differential is an isometry; orthogonal to it the
/// Jacobi fields shrink by `sin‖w‖/‖w‖`. The result is expressed at `base`
/// and is not re-projected.
pub fn exp_adjoint(base: &[f64], w: &[f64], cotangent: &[f64]) -> Vec<f64> {
    let theta = norm(w);
    let end = exp(base, w).unwrap_or_else(|_| base.to_vec());
    let g = project_tangent(&end, cotangent);
    if theta < 1e-9 {
        return g;
    }
    let (s, c) = theta.sin_cos();
    // Unit velocity of the geodesic at its endpoint, and the shooting direction.
    let dir: Vec<f64> = w.iter().map(|x| x / theta).collect();
    let vel_end: Vec<f64> = base
        .iter()
        .zip(&dir)
        .map(|(b, d)| -s * b + c * d)
        .collect();
    let along = dot(&g, &vel_end);
    let factor = s / theta;
    g.iter()
        .zip(&vel_end)
        .zip(&dir)
        .map(|((gi, vi), di)| factor * (gi - along * vi) + along * di)
        .collect()
}
