mod common;

use common::*;
use elastic_shape::kendall::{preshape_distance, shape_distance};
use elastic_shape::{
    apply_warp, register_collection, static_frechet_mean, trajectory_log, PreShape,
    RegistrationConfig, Trajectory, WarpingFunction,
};

fn tight() -> RegistrationConfig {
    RegistrationConfig {
        max_iterations: 200,
        step_size: 1.0,
        tolerance: 1e-12,
        dp_enabled: false,
    }
}

#[test]
fn static_mean_of_one_shape_is_that_shape() {
    let mut r = rng(1);
    let x = random_preshape(&mut r, 6, 3);
    let mean = static_frechet_mean(std::slice::from_ref(&x), &RegistrationConfig::default()).unwrap();
    assert!(shape_distance(&mean.mean, &x) < 1e-12);
    assert!(mean.converged);
}

#[test]
fn static_mean_of_two_shapes_is_midpoint() {
    let mut r = rng(2);
    let x = random_preshape(&mut r, 5, 3);
    let w = random_tangent(&mut r, &x, 0.4);
    let y = elastic_shape::exp_map(&x, &w).unwrap().rotated(&random_rotation(&mut r, 3));
    let mean = static_frechet_mean(&[x.clone(), y.clone()], &tight()).unwrap().mean;
    let (a, b) = (shape_distance(&mean, &x), shape_distance(&mean, &y));
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    assert!((a + b - shape_distance(&x, &y)).abs() < 1e-6);
}

#[test]
fn static_mean_respects_landmark_symmetry() {
    // Cyclic relabelling of a triangle's vertices permutes the three inputs,
    // so the mean must be equidistant from all of them.
    let rows = [[0.0, 0.0], [1.3, 0.1], [0.4, 0.9]];
    let shapes: Vec<PreShape> = (0..3)
        .map(|s| {
            let data: Vec<f64> = (0..3).flat_map(|i| rows[(i + s) % 3]).collect();
            elastic_shape::to_preshape(&elastic_shape::Configuration::new(3, 2, data).unwrap()).unwrap()
        })
        .collect();
    let mean = static_frechet_mean(&shapes, &tight()).unwrap().mean;
    let d: Vec<f64> = shapes.iter().map(|s| shape_distance(&mean, s)).collect();
    assert!((d[0] - d[1]).abs() < 1e-6 && (d[1] - d[2]).abs() < 1e-6, "{d:?}");
}

#[test]
fn static_mean_never_worse_than_start() {
    let mut r = rng(3);
    let base = random_preshape(&mut r, 6, 3);
    let shapes: Vec<PreShape> = (0..10)
        .map(|_| elastic_shape::exp_map(&base, &random_tangent(&mut r, &base, 0.3)).unwrap())
        .collect();
    let out = static_frechet_mean(&shapes, &RegistrationConfig::default()).unwrap();
    let start: f64 = shapes.iter().map(|s| shape_distance(&shapes[0], s).powi(2)).sum();
    assert!(out.objective <= start);
}

#[test]
fn single_trajectory_is_its_own_mean() {
    let mut r = rng(4);
    let tr = smooth_trajectory(&mut r, 5, 3, 12, 0.3);
    let res = register_collection(std::slice::from_ref(&tr), &RegistrationConfig::default()).unwrap();
    assert!(res.converged);
    assert!(res.shooting[0].norm() < 1e-5);
    for (a, b) in res.mean.frames().iter().zip(tr.frames()) {
        assert!(shape_distance(a, b) < 1e-8);
    }
}

#[test]
fn rotated_copies_share_the_mean() {
    let mut r = rng(5);
    let tr = smooth_trajectory(&mut r, 6, 3, 15, 0.3);
    let rotated = Trajectory::new(
        tr.frames()
            .iter()
            .map(|f| f.rotated(&random_rotation(&mut r, 3)))
            .collect(),
    )
    .unwrap();
    let cfg = RegistrationConfig {
        dp_enabled: false,
        ..Default::default()
    };
    let res = register_collection(&[tr.clone(), rotated], &cfg).unwrap();
    for (a, b) in res.mean.frames().iter().zip(tr.frames()) {
        assert!(shape_distance(a, b) < 1e-6);
    }
}

#[test]
fn warped_copies_are_registered() {
    let mut r = rng(6);
    let t = 60;
    let tr = smooth_trajectory(&mut r, 6, 3, t, 0.4);
    let gamma = WarpingFunction::from_fn(t, |s| s.powf(1.6)).unwrap();
    let warped = apply_warp(&tr, &gamma).unwrap();
    let res = register_collection(&[tr, warped], &RegistrationConfig::default()).unwrap();
    let worst = res.aligned[0]
        .frames()
        .iter()
        .zip(res.aligned[1].frames())
        .map(|(a, b)| preshape_distance(a, b))
        .fold(0.0, f64::max);
    assert!(worst < 5.0 / t as f64, "worst frame distance {worst}");
}

#[test]
fn shooting_vectors_match_final_mean() {
    let mut r = rng(7);
    let coll = random_collection(&mut r, 5, 5, 3, 15);
    let res = register_collection(&coll, &RegistrationConfig::default()).unwrap();
    for (v, a) in res.shooting.iter().zip(&res.aligned) {
        let expect = trajectory_log(&res.mean, a).unwrap();
        assert!(field_max_diff(v, &expect) < 1e-9);
    }
    assert_eq!(res.objective_history.len(), res.log.len());
    assert!(res.convergence_log().lines().count() == res.log.len() + 1);
}

#[test]
fn objective_nonincreasing() {
    for seed in 0..5 {
        let mut r = rng(100 + seed);
        let coll = random_collection(&mut r, 6, 5, 3, 16);
        let cfg = RegistrationConfig::default();
        let res = register_collection(&coll, &cfg).unwrap();
        for w in res.objective_history.windows(2) {
            assert!(w[1] <= w[0] + cfg.tolerance, "seed {seed}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn nuisance_quotient_invariance() {
    let mut r = rng(8);
    let coll = random_collection(&mut r, 5, 6, 3, 14);
    let corrupted: Vec<Trajectory> = coll.iter().map(|tr| corrupt_frames(&mut r, tr)).collect();
    for dp in [false, true] {
        let cfg = RegistrationConfig {
            dp_enabled: dp,
            ..Default::default()
        };
        let a = register_collection(&coll, &cfg).unwrap();
        let b = register_collection(&corrupted, &cfg).unwrap();
        let (fa, fb) = (a.objective_history.last().unwrap(), b.objective_history.last().unwrap());
        assert!((fa - fb).abs() < 1e-6, "dp={dp}: {fa} vs {fb}");
        for i in 0..coll.len() {
            for j in 0..coll.len() {
                let da: f64 = a.aligned[i].frames().iter().zip(a.aligned[j].frames()).map(|(x, y)| shape_distance(x, y)).sum();
                let db: f64 = b.aligned[i].frames().iter().zip(b.aligned[j].frames()).map(|(x, y)| shape_distance(x, y)).sum();
                assert!((da - db).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn rejects_mismatched_collection() {
    let mut r = rng(9);
    let a = smooth_trajectory(&mut r, 5, 3, 10, 0.2);
    let b = smooth_trajectory(&mut r, 5, 3, 11, 0.2);
    assert!(register_collection(&[a, b], &RegistrationConfig::default()).is_err());
    let bad = RegistrationConfig {
        step_size: 0.0,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn reregistering_converged_output_is_idempotent() {
    let mut r = rng(10);
    let coll = random_collection(&mut r, 6, 5, 3, 16);
    let cfg = RegistrationConfig {
        max_iterations: 300,
        ..Default::default()
    };
    let res = register_collection(&coll, &cfg).unwrap();
    assert!(res.converged);
    let mean_field = elastic_shape::TangentField::mean(&res.shooting).unwrap();
    assert!(mean_field.norm() < cfg.tolerance);
    let start = res.alignment_target(cfg.dp_enabled).unwrap();
    let again = elastic_shape::register_collection_from(&res.aligned, &start, &cfg).unwrap();
    assert!(again.converged && again.iterations <= 2, "{} iterations", again.iterations);
}

#[test]
fn full_step_converges_quickly() {
    let mut r = rng(11);
    let coll = random_collection(&mut r, 6, 5, 3, 16);
    let cfg = RegistrationConfig {
        step_size: 1.0,
        ..Default::default()
    };
    let res = register_collection(&coll, &cfg).unwrap();
    assert!(res.converged && res.iterations < 10);
}
