#![allow(dead_code)]

use elastic_shape::kendall::{project_to_tangent, to_preshape};
use elastic_shape::{Configuration, PreShape, Rotation, TangentField, TangentVector, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_configuration(rng: &mut impl Rng, k: usize, m: usize) -> Configuration {
    let data = (0..k * m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Configuration::new(k, m, data).unwrap()
}

pub fn random_preshape(rng: &mut impl Rng, k: usize, m: usize) -> PreShape {
    to_preshape(&random_configuration(rng, k, m)).unwrap()
}

/// Random tangent vector at `base` with the given norm.
pub fn random_tangent(rng: &mut impl Rng, base: &PreShape, norm: f64) -> TangentVector {
    let raw: Vec<f64> = (0..base.k() * base.m())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let v = project_to_tangent(base, &raw);
    v.scaled(norm / v.norm())
}

pub fn random_rotation(rng: &mut impl Rng, m: usize) -> Rotation {
    Rotation::random(rng, m)
}

/// Constant-speed geodesic from `start` with total length `length`.
pub fn geodesic(start: &PreShape, direction: &TangentVector, length: f64, t: usize) -> Trajectory {
    let unit = direction.scaled(1.0 / direction.norm());
    let frames = (0..t)
        .map(|i| {
            let s = length * i as f64 / (t - 1) as f64;
            elastic_shape::exp_map(start, &unit.scaled(s)).unwrap()
        })
        .collect();
    Trajectory::new(frames).unwrap()
}

/// Smooth random trajectory: a base shape moved along a few tangent
/// directions with sinusoidal coefficients.
pub fn smooth_trajectory(rng: &mut impl Rng, k: usize, m: usize, t: usize, amplitude: f64) -> Trajectory {
    let base = random_preshape(rng, k, m);
    let dirs: Vec<TangentVector> = (0..3).map(|_| random_tangent(rng, &base, 1.0)).collect();
    let phases: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 6.0).collect();
    let freqs: Vec<f64> = (0..3).map(|_| 0.5 + rng.random::<f64>() * 1.5).collect();
    let frames = (0..t)
        .map(|i| {
            let s = i as f64 / (t - 1) as f64;
            let mut acc = vec![0.0; k * m];
            for ((d, p), f) in dirs.iter().zip(&phases).zip(&freqs) {
                let c = amplitude * (std::f64::consts::TAU * f * s + p).sin();
                acc.iter_mut().zip(d.as_slice()).for_each(|(a, x)| *a += c * x);
            }
            let v = project_to_tangent(&base, &acc);
            elastic_shape::exp_map(&base, &v).unwrap()
        })
        .collect();
    Trajectory::new(frames).unwrap()
}

pub fn field_max_diff(a: &TangentField, b: &TangentField) -> f64 {
    a.to_flat()
        .iter()
        .zip(b.to_flat())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Applies an independent random rotation, scale and translation to every
/// frame, then maps back to the preshape sphere.
pub fn corrupt_frames(rng: &mut impl Rng, traj: &Trajectory) -> Trajectory {
    let frames = traj
        .frames()
        .iter()
        .map(|f| {
            let m = f.m();
            let r = Rotation::random(rng, m);
            let scale = 0.2 + 5.0 * rng.random::<f64>();
            let shift: Vec<f64> = (0..m).map(|_| 10.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            to_preshape(&f.to_configuration().transformed(scale, &r, &shift)).unwrap()
        })
        .collect();
    Trajectory::new(frames).unwrap()
}

/// A collection of small perturbations of one smooth trajectory.
pub fn random_collection(rng: &mut impl Rng, n: usize, k: usize, m: usize, t: usize) -> Vec<Trajectory> {
    let base = smooth_trajectory(rng, k, m, t, 0.3);
    (0..n)
        .map(|_| {
            let frames = base
                .frames()
                .iter()
                .map(|f| {
                    let w = random_tangent(rng, f, 0.05);
                    elastic_shape::exp_map(f, &w).unwrap()
                })
                .collect();
            Trajectory::new(frames).unwrap()
        })
        .collect()
}
