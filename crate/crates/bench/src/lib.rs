//! Shared fixtures for the criterion benchmarks.

use elastic_shape::kendall::project_to_tangent;
use elastic_shape::{exp_map, to_preshape, Configuration, PreShape, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_preshape(rng: &mut impl Rng, k: usize, m: usize) -> PreShape {
    let data = (0..k * m).map(|_| rng.random::<f64>() - 0.5).collect();
    to_preshape(&Configuration::new(k, m, data).unwrap()).unwrap()
}

/// Smooth trajectory of `t` frames: a random shape pushed back and forth
/// along one tangent direction.
pub fn random_trajectory(rng: &mut impl Rng, k: usize, m: usize, t: usize) -> Trajectory {
    let base = random_preshape(rng, k, m);
    let dir = random_preshape(rng, k, m);
    let v = project_to_tangent(&base, dir.as_slice());
    let v = v.scaled(0.4 / v.norm());
    let phase = rng.random::<f64>() * 6.0;
    let frames = (0..t)
        .map(|i| {
            let s = i as f64 / (t - 1) as f64;
            exp_map(&base, &v.scaled((std::f64::consts::TAU * s + phase).sin())).unwrap()
        })
        .collect();
    Trajectory::new(frames).unwrap()
}
