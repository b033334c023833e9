use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::kendall::{exp_map, preshape_distance, project_to_tangent, to_preshape, Configuration, Rotation};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn shape(rng: &mut ChaCha8Rng, k: usize, m: usize) -> PreShape {
    let data = (0..k * m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    to_preshape(&Configuration::new(k, m, data).unwrap()).unwrap()
}

fn tangent(rng: &mut ChaCha8Rng, base: &PreShape, norm: f64) -> crate::kendall::TangentVector {
    let raw: Vec<f64> = (0..base.k() * base.m()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let v = project_to_tangent(base, &raw);
    v.scaled(norm / v.norm())
}

fn mean_trajectory(rng: &mut ChaCha8Rng, k: usize, m: usize, t: usize) -> Trajectory {
    let start = shape(rng, k, m);
    let dir = tangent(rng, &start, 1.0);
    Trajectory::new((0..t).map(|i| exp_map(&start, &dir.scaled(0.05 * i as f64)).unwrap()).collect()).unwrap()
}

fn kendall_setup(seed: u64) -> (OutputGeometry, Trajectory, NetworkParams) {
    let mut r = rng(seed);
    let mean = mean_trajectory(&mut r, 5, 3, 4);
    let params = NetworkParams::random(60, 6, 5, 3, &mut r);
    (OutputGeometry::Kendall { mean: mean.clone() }, mean, params)
}

#[test]
fn zero_network_encodes_to_origin() {
    let p = NetworkParams::zeros(4, 3, 2, 2);
    let code = encode_mean(&p, &[1.0, -2.0, 0.5, 3.0]).unwrap();
    assert_eq!(code.posterior_mean, vec![0.0, 0.0]);
    assert_eq!(code.posterior_logvar, vec![0.0, 0.0]);
    assert_eq!(code.z, vec![0.0, 0.0]);
    assert!(encode_mean(&p, &[1.0]).is_err());
}

#[test]
fn encoding_is_deterministic_per_seed() {
    let p = NetworkParams::random(5, 4, 3, 2, &mut rng(1));
    let v = [0.1, 0.2, -0.3, 0.4, 0.5];
    let a = encode(&p, &v, true, 0.1, &mut rng(9)).unwrap();
    let b = encode(&p, &v, true, 0.1, &mut rng(9)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.z, a.posterior_mean);
}

#[test]
fn identity_encoder_gives_tanh() {
    let d = 3;
    let mut p = NetworkParams::zeros(d, d, 2, d);
    for i in 0..d {
        p.w1[i * d + i] = 1.0;
        p.w_mu[i * d + i] = 1.0;
    }
    let v = [0.3, -1.2, 2.0];
    let code = encode_mean(&p, &v).unwrap();
    for (c, x) in code.posterior_mean.iter().zip(v) {
        assert_eq!(*c, x.tanh());
    }
}

#[test]
fn zero_decoder_gives_zero_field_and_mean_trajectory() {
    let (geom, mean, p) = kendall_setup(2);
    let zero = p.zeros_like();
    let field = decode(&zero, &[0.4, -0.2, 1.0], &geom).unwrap();
    assert!(field.iter().all(|x| *x == 0.0));
    let rec = reconstruct_trajectory(&zero, &[0.4, -0.2, 1.0], &geom).unwrap();
    for (a, b) in rec.frames().iter().zip(mean.frames()) {
        assert!(preshape_distance(a, b) < 1e-12);
    }
}

#[test]
fn decoded_fields_are_tangent() {
    let (geom, mean, p) = kendall_setup(3);
    let field = decode(&p, &[1.0, 2.0, -3.0], &geom).unwrap();
    let tf = TangentField::from_flat(4, 5, 3, &field).unwrap();
    for (v, f) in tf.vectors().iter().zip(mean.frames()) {
        assert!(v.is_tangent_at(f, 1e-12));
        let sums = crate::kendall::column_sums(v.as_slice(), 3);
        assert!(sums.iter().all(|s| s.abs() < 1e-12));
    }
}

#[test]
fn decoder_matches_hand_computation() {
    let mut p = NetworkParams::zeros(2, 1, 2, 1);
    p.w2 = vec![0.5, -1.0];
    p.b2 = vec![0.1, 0.0];
    p.w3 = vec![1.0, 2.0, -1.0, 0.5];
    p.b3 = vec![0.0, 1.0];
    let z = 0.8;
    let (a, b) = ((0.5f64 * z + 0.1).tanh(), (-z).tanh());
    let out = decode(&p, &[z], &OutputGeometry::Euclidean).unwrap();
    assert_eq!(out, vec![a + 2.0 * b, -a + 0.5 * b + 1.0]);
}

#[test]
fn reconstruction_round_trips_and_matches_norms() {
    let (geom, mean, p) = kendall_setup(4);
    let z = [0.5, -1.0, 0.3];
    let field = decode(&p, &z, &geom).unwrap();
    let rec = reconstruct_trajectory(&p, &z, &geom).unwrap();
    let back = crate::trajectory::trajectory_log(&mean, &rec).unwrap().to_flat();
    assert!(back.iter().zip(&field).all(|(a, b)| (a - b).abs() < 1e-9));
    let tf = TangentField::from_flat(4, 5, 3, &field).unwrap();
    for ((v, f), r) in tf.vectors().iter().zip(mean.frames()).zip(rec.frames()) {
        assert!((preshape_distance(f, r) - v.norm()).abs() < 1e-9);
    }
}

#[test]
fn kl_analytic_values() {
    let code = |mu: Vec<f64>, lv: Vec<f64>| LatentCode {
        z: mu.clone(),
        posterior_mean: mu,
        posterior_logvar: lv,
    };
    assert_eq!(kl_divergence(&code(vec![0.0, 0.0], vec![0.0, 0.0])), 0.0);
    assert!((kl_divergence(&code(vec![1.0], vec![0.0])) - 0.5).abs() < 1e-12);
    let e = std::f64::consts::E;
    assert!((kl_divergence(&code(vec![0.0], vec![1.0])) - (e - 2.0) / 2.0).abs() < 1e-12);
    assert!(kl_divergence(&code(vec![0.3, -2.0], vec![-1.5, 0.7])) >= 0.0);
}

#[test]
fn geodesic_loss_cases() {
    let mut r = rng(5);
    let mean = mean_trajectory(&mut r, 5, 3, 3);
    assert_eq!(reconstruction_loss_geodesic(&mean, &mean).unwrap(), 0.0);
    let rotated = Trajectory::new(mean.frames().iter().map(|f| f.rotated(&Rotation::random(&mut r, 3))).collect()).unwrap();
    assert!(reconstruction_loss_geodesic(&mean, &rotated).unwrap() < 1e-8);

    // Planar triangle and its image under a pure dilation-free shear that
    // is already in optimal position: a point at exact distance θ along a
    // horizontal tangent direction.
    let x = to_preshape(&Configuration::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap()).unwrap();
    let w = project_to_tangent(&x, &[0.0, 1.0, 0.0, 1.0, 0.0, -2.0]);
    let theta = 0.3;
    let y = exp_map(&x, &w.scaled(theta / w.norm())).unwrap();
    assert!(crate::kendall::optimal_rotation(&x, &y).rotation.as_slice().iter().zip([1.0, 0.0, 0.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-9));
    let one = |p: &PreShape| Trajectory::new(vec![p.clone(), p.clone()]).unwrap();
    let loss = reconstruction_loss_geodesic(&one(&x), &one(&y)).unwrap();
    assert!((loss - 2.0 * theta * theta).abs() < 1e-12);
}

#[test]
fn tangent_loss_cases() {
    let (_, mean, _) = kendall_setup(6);
    let mut r = rng(6);
    let a = TangentField::new(mean.frames().iter().map(|f| tangent(&mut r, f, 0.2)).collect());
    let b = TangentField::new(mean.frames().iter().map(|f| tangent(&mut r, f, 0.1)).collect());
    assert_eq!(reconstruction_loss_tangent(&a, &a).unwrap(), 0.0);
    let zero = TangentField::zeros(4, 5, 3);
    assert!((reconstruction_loss_tangent(&a, &zero).unwrap() - a.norm().powi(2)).abs() < 1e-12);
    let brute: f64 = a.to_flat().iter().zip(b.to_flat()).map(|(x, y)| (x - y) * (x - y)).sum();
    assert!((reconstruction_loss_tangent(&a, &b).unwrap() - brute).abs() < 1e-14);
}

fn kendall_batch(geom: &OutputGeometry, mean: &Trajectory, n: usize, seed: u64) -> Vec<Sample> {
    let mut r = rng(seed + 1000);
    (0..n)
        .map(|_| {
            let target = Trajectory::new(
                mean.frames().iter().map(|f| exp_map(f, &tangent(&mut r, f, 0.2)).unwrap()).collect(),
            )
            .unwrap()
            .to_flat();
            Sample {
                input: geom.log(&target).unwrap(),
                target,
            }
        })
        .collect()
}

#[test]
fn exact_reconstruction_has_zero_gradient() {
    let (geom, mean, p) = kendall_setup(7);
    let batch = kendall_batch(&geom, &mean, 1, 7);
    let mut exact = p.zeros_like();
    exact.b3 = geom.log(&batch[0].target).unwrap();
    let cfg = TrainingConfig {
        kl_weight: 0.0,
        dropout_rate: 0.0,
        ..TrainingConfig::default()
    };
    let (loss, grad) = loss_and_gradient(&exact, &batch, &geom, &cfg, &mut rng(0)).unwrap();
    assert!(loss.reconstruction < 1e-20);
    let norm: f64 = grad.tensors().iter().flat_map(|(_, t)| t.iter()).map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm < 1e-8);
}

#[test]
fn loss_decomposes() {
    let (geom, mean, p) = kendall_setup(8);
    let batch = kendall_batch(&geom, &mean, 5, 8);
    let cfg = TrainingConfig {
        kl_weight: 0.37,
        ..TrainingConfig::default()
    };
    let (loss, _) = loss_and_gradient(&p, &batch, &geom, &cfg, &mut rng(1)).unwrap();
    assert!((loss.total - (loss.reconstruction + 0.37 * loss.kl)).abs() < 1e-10);
    assert!(loss.kl >= 0.0);
}

#[test]
fn geodesic_loss_is_rotation_invariant_in_training() {
    let (geom, mean, p) = kendall_setup(9);
    let batch = kendall_batch(&geom, &mean, 2, 9);
    let mut r = rng(10);
    let rotated: Vec<Sample> = batch
        .iter()
        .map(|s| {
            let target = s
                .target
                .chunks(15)
                .flat_map(|c| {
                    let ps = PreShape::from_normalized(5, 3, c.to_vec()).unwrap();
                    ps.rotated(&Rotation::random(&mut r, 3)).as_slice().to_vec()
                })
                .collect();
            Sample {
                input: s.input.clone(),
                target,
            }
        })
        .collect();
    let cfg = TrainingConfig::default();
    let a = loss_and_gradient(&p, &batch, &geom, &cfg, &mut rng(2)).unwrap().0;
    let b = loss_and_gradient(&p, &rotated, &geom, &cfg, &mut rng(2)).unwrap().0;
    assert!((a.total - b.total).abs() < 1e-8);
}

#[test]
fn euclidean_loss_adds_normal_component() {
    // On tangent targets the ambient squared error splits into the
    // projected error plus the squared normal part of the raw output.
    let (geom, mean, p) = kendall_setup(11);
    let batch = kendall_batch(&geom, &mean, 3, 11);
    let tangent_targets: Vec<Sample> = batch
        .iter()
        .map(|s| Sample {
            input: s.input.clone(),
            target: geom.log(&s.target).unwrap(),
        })
        .collect();
    let cfg = TrainingConfig {
        loss_mode: LossMode::TangentMse,
        ..TrainingConfig::default()
    };
    let riem = loss_and_gradient(&p, &batch, &geom, &cfg, &mut rng(3)).unwrap().0;
    let eucl = loss_and_gradient(&p, &tangent_targets, &OutputGeometry::Euclidean, &cfg, &mut rng(3)).unwrap().0;
    let mut noise = rng(3);
    let mut normal = 0.0;
    for s in &batch {
        let n = Noise::draw(&mut noise, p.hidden(), p.latent(), cfg.dropout_rate);
        let raw = p.decoder_forward(&p.encoder_forward(&s.input, &n).z).raw;
        let proj = geom.project(&raw);
        normal += raw.iter().zip(&proj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    normal /= batch.len() as f64;
    assert!((eucl.reconstruction - (riem.reconstruction + normal)).abs() < 1e-10);
    assert_eq!(eucl.kl, riem.kl);
}

#[test]
fn zero_epochs_returns_initial_params() {
    let (geom, mean, _) = kendall_setup(12);
    let batch = kendall_batch(&geom, &mean, 3, 12);
    let cfg = TrainingConfig {
        epochs: 0,
        latent_dim: 3,
        hidden: 6,
        decoder_hidden: 5,
        ..TrainingConfig::default()
    };
    let out = train(&batch, &geom, &cfg).unwrap();
    assert_eq!(out.params, initial_params(60, &cfg));
    assert!(out.history.is_empty());
    assert!(matches!(train(&[], &geom, &cfg), Err(Error::EmptyTrainingSet)));
}

#[test]
fn training_is_deterministic_and_learns_one_sample() {
    let (geom, mean, _) = kendall_setup(13);
    let batch = kendall_batch(&geom, &mean, 1, 13);
    let cfg = TrainingConfig {
        latent_dim: 2,
        hidden: 16,
        decoder_hidden: 8,
        kl_weight: 1e-4,
        learning_rate: 1e-2,
        epochs: 300,
        ..TrainingConfig::default()
    };
    let a = train(&batch, &geom, &cfg).unwrap();
    let b = train(&batch, &geom, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history.len(), 300);
    let first = a.history[0].reconstruction;
    let last = a.history.last().unwrap().reconstruction;
    assert!(last < 0.1 * first, "{first} -> {last}");
}

#[test]
fn divergence_is_reported() {
    let (geom, mean, _) = kendall_setup(14);
    let mut batch = kendall_batch(&geom, &mean, 2, 14);
    batch[1].input[0] = 1e308;
    let cfg = TrainingConfig {
        latent_dim: 3,
        hidden: 6,
        decoder_hidden: 5,
        epochs: 2,
        learning_rate: 1e6,
        ..TrainingConfig::default()
    };
    let err = train(&batch, &geom, &cfg).unwrap_err();
    assert!(matches!(err, Error::TrainingDiverged { .. }), "{err}");
}

fn codes_with_variances(vars: &[f64]) -> Vec<LatentCode> {
    (0..4)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            let mu: Vec<f64> = vars.iter().map(|v| s * v.sqrt()).collect();
            LatentCode {
                z: mu.clone(),
                posterior_mean: mu,
                posterior_logvar: vec![0.0; vars.len()],
            }
        })
        .collect()
}

#[test]
fn reordering_sorts_by_variance() {
    let p = NetworkParams::random(3, 4, 3, 2, &mut rng(15));
    let (perm, same, _) = reorder_latents(&p, &codes_with_variances(&[4.0, 1.0])).unwrap();
    assert_eq!(perm, vec![0, 1]);
    assert_eq!(same, p);
    let (perm, swapped, codes) = reorder_latents(&p, &codes_with_variances(&[1.0, 4.0])).unwrap();
    assert_eq!(perm, vec![1, 0]);
    assert_eq!(codes[0].posterior_mean, vec![2.0, 1.0]);
    assert_ne!(swapped, p);
    assert!(reorder_latents(&p, &codes_with_variances(&[1.0, 4.0])[..1]).is_err());
}

#[test]
fn reordering_is_a_conjugation() {
    let (geom, mean, p) = kendall_setup(16);
    let batch = kendall_batch(&geom, &mean, 6, 16);
    let codes: Vec<LatentCode> = batch.iter().map(|s| encode_mean(&p, &s.input).unwrap()).collect();
    let (perm, q, reordered) = reorder_latents(&p, &codes).unwrap();
    for (s, (old, new)) in batch.iter().zip(codes.iter().zip(&reordered)) {
        let permuted: Vec<f64> = perm.iter().map(|&i| old.z[i]).collect();
        let a = decode(&p, &old.z, &geom).unwrap();
        let b = decode(&q, &permuted, &geom).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        let fresh = encode_mean(&q, &s.input).unwrap();
        assert!(fresh.posterior_mean.iter().zip(&new.posterior_mean).all(|(x, y)| (x - y).abs() < 1e-12));
    }
}

#[test]
fn config_validation() {
    assert!(TrainingConfig::default().validate().is_ok());
    assert!(TrainingConfig::ntu_profile().validate().is_ok());
    let bad = TrainingConfig {
        dropout_rate: 1.0,
        ..TrainingConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = TrainingConfig {
        latent_dim: 0,
        ..TrainingConfig::default()
    };
    assert!(bad.validate().is_err());
}
