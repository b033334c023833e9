use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::RawSequence;
use crate::error::{Error, Result};
use crate::kendall::{Configuration, Rotation};
use crate::sphere;

fn substream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SphereDatasetSpec {
    pub n_points: usize,
    /// Standard deviation of the isotropic tangent noise.
    pub noise_level: f64,
    /// Colatitude swing of the curve around the equator.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for SphereDatasetSpec {
    fn default() -> Self {
        SphereDatasetSpec {
            n_points: 500,
            noise_level: 0.05,
            amplitude: 0.6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SphereDataset {
    pub points: Vec<Vec<f64>>,
    /// Noise-free curve point each sample was generated from.
    pub curve: Vec<Vec<f64>>,
    pub s: Vec<f64>,
}

/// `c(s)` with colatitude `π/2 + amplitude·sin 2πs` and longitude `2πs`.
pub fn sphere_curve(s: f64, amplitude: f64) -> Vec<f64> {
    let phi = PI / 2.0 + amplitude * (TAU * s).sin();
    let lambda = TAU * s;
    vec![phi.sin() * lambda.cos(), phi.sin() * lambda.sin(), phi.cos()]
}

pub fn generate_sphere_dataset(spec: &SphereDatasetSpec) -> Result<SphereDataset> {
    if spec.n_points < 10 || !(spec.noise_level >= 0.0) || !spec.noise_level.is_finite() {
        return Err(Error::InvalidInput("need n_points ≥ 10 and a finite noise_level ≥ 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = SphereDataset {
        points: Vec::with_capacity(spec.n_points),
        curve: Vec::with_capacity(spec.n_points),
        s: Vec::with_capacity(spec.n_points),
    };
    for _ in 0..spec.n_points {
        let s: f64 = rng.random();
        let c = sphere_curve(s, spec.amplitude);
        let raw: Vec<f64> = (0..3).map(|_| spec.noise_level * rng.sample::<f64, _>(StandardNormal)).collect();
        let eta = sphere::project_tangent(&c, &raw);
        let p = sphere::exp(&c, &eta)?;
        out.points.push(p);
        out.curve.push(c);
        out.s.push(s);
    }
    Ok(out)
}

/// Which nuisance transformations corrupt each generated sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Nuisance {
    pub rotation: bool,
    pub scale: bool,
    pub translation: bool,
    pub warp: bool,
}

impl Default for Nuisance {
    fn default() -> Self {
        Nuisance::all()
    }
}

impl Nuisance {
    pub fn all() -> Self {
        Nuisance {
            rotation: true,
            scale: true,
            translation: true,
            warp: true,
        }
    }

    pub fn none() -> Self {
        Nuisance {
            rotation: false,
            scale: false,
            translation: false,
            warp: false,
        }
    }
}

/// Synthetic labeled skeleton motions: `subjects × classes × per_class`
/// sequences of an 8-joint 3D stick figure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabeledSpec {
    pub classes: usize,
    pub subjects: usize,
    pub per_class: usize,
    pub frames: usize,
    /// Scale of the per-subject and per-sample landmark offsets.
    pub perturbation: f64,
    pub nuisance: Nuisance,
    pub seed: u64,
}

impl Default for LabeledSpec {
    fn default() -> Self {
        LabeledSpec {
            classes: 4,
            subjects: 40,
            per_class: 1,
            frames: 50,
            perturbation: 0.05,
            nuisance: Nuisance::all(),
            seed: 0,
        }
    }
}

pub const SKELETON_JOINTS: usize = 8;

// Pelvis, chest, neck, head, left hand, right hand, left foot, right foot.
const SKELETON: [[f64; 3]; SKELETON_JOINTS] = [
    [0.0, 0.0, 1.0],
    [0.0, 0.0, 1.3],
    [0.0, 0.0, 1.5],
    [0.0, 0.05, 1.72],
    [-0.45, 0.1, 1.05],
    [0.45, 0.1, 1.05],
    [-0.15, 0.0, 0.0],
    [0.15, 0.0, 0.0],
];

struct ClassMotion {
    frequency: f64,
    amplitude: Vec<[f64; 3]>,
    phase: Vec<f64>,
}

fn class_motion(seed: u64, class: usize) -> ClassMotion {
    let mut rng = substream(seed, 1 + class as u64);
    let frequency = 1.0 + 0.5 * (class % 3) as f64;
    let mut amplitude = Vec::with_capacity(SKELETON_JOINTS);
    let mut phase = Vec::with_capacity(SKELETON_JOINTS);
    for j in 0..SKELETON_JOINTS {
        // Limbs swing more than the torso.
        let reach = if j >= 4 { 0.35 } else { 0.08 };
        amplitude.push([
            reach * (2.0 * rng.random::<f64>() - 1.0),
            reach * (2.0 * rng.random::<f64>() - 1.0),
            reach * (2.0 * rng.random::<f64>() - 1.0),
        ]);
        phase.push(TAU * rng.random::<f64>());
    }
    ClassMotion {
        frequency,
        amplitude,
        phase,
    }
}

fn pose(motion: &ClassMotion, tau: f64, offsets: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(SKELETON_JOINTS * 3);
    for j in 0..SKELETON_JOINTS {
        let w = (TAU * motion.frequency * tau + motion.phase[j]).sin();
        for c in 0..3 {
            out.push(SKELETON[j][c] + motion.amplitude[j][c] * w + offsets[j * 3 + c]);
        }
    }
    out
}

/// Noise-free prototype of a class, `frames × 8 × 3` row-major.
pub fn class_prototype(spec: &LabeledSpec, class: usize) -> Vec<f64> {
    let motion = class_motion(spec.seed, class);
    let zero = vec![0.0; SKELETON_JOINTS * 3];
    (0..spec.frames)
        .flat_map(|i| pose(&motion, i as f64 / (spec.frames - 1) as f64, &zero))
        .collect()
}

/// Generates the dataset. Every random draw happens whether or not its
/// nuisance is enabled, so toggling a nuisance leaves the rest unchanged.
/// Targets hold the norm of the per-sample landmark offsets.
pub fn generate_labeled_trajectories(spec: &LabeledSpec) -> Result<Vec<RawSequence>> {
    if spec.classes < 2 || spec.subjects == 0 || spec.per_class == 0 || spec.frames < 2 {
        return Err(Error::InvalidInput(
            "need ≥ 2 classes, ≥ 1 subject, ≥ 1 sample per class and ≥ 2 frames".into(),
        ));
    }
    if !(spec.perturbation >= 0.0) || !spec.perturbation.is_finite() {
        return Err(Error::InvalidInput("perturbation must be finite and ≥ 0".into()));
    }
    let motions: Vec<ClassMotion> = (0..spec.classes).map(|c| class_motion(spec.seed, c)).collect();
    let n = SKELETON_JOINTS * 3;
    let mut out = Vec::with_capacity(spec.subjects * spec.classes * spec.per_class);
    for subject in 0..spec.subjects {
        let mut rng = substream(spec.seed, 10_000 + subject as u64);
        let body: Vec<f64> = (0..n)
            .map(|_| spec.perturbation * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for (class, motion) in motions.iter().enumerate() {
            for rep in 0..spec.per_class {
                let own: Vec<f64> = (0..n)
                    .map(|_| spec.perturbation * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let severity = own.iter().map(|x| x * x).sum::<f64>().sqrt();
                let offsets: Vec<f64> = body.iter().zip(&own).map(|(a, b)| a + b).collect();

                let rotation = Rotation::random(&mut rng, 3);
                let scale = (rng.random_range(0.5f64.ln()..2.0f64.ln())).exp();
                let shift: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let bend: f64 = rng.random_range(-1.0..1.0);

                let nz = spec.nuisance;
                let rotation = if nz.rotation { rotation } else { Rotation::identity(3) };
                let scale = if nz.scale { scale } else { 1.0 };
                let shift = if nz.translation { shift } else { vec![0.0; 3] };
                let mut data = Vec::with_capacity(spec.frames * n);
                for i in 0..spec.frames {
                    let s = i as f64 / (spec.frames - 1) as f64;
                    let tau = if nz.warp && bend.abs() > 1e-9 {
                        (bend * s).exp_m1() / bend.exp_m1()
                    } else {
                        s
                    };
                    let cfg = Configuration::new(SKELETON_JOINTS, 3, pose(motion, tau, &offsets))?;
                    data.extend_from_slice(cfg.transformed(scale, &rotation, &shift).as_slice());
                }
                let mut seq = RawSequence::new(format!("subj{subject:03}"), SKELETON_JOINTS, 3, data)?;
                seq.sequence_id = format!("c{class}_{rep}");
                seq.target = Some(severity);
                seq.label = Some(format!("c{class}"));
                out.push(seq);
            }
        }
    }
    Ok(out)
}
