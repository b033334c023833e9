use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{generate_sphere_dataset, sphere_curve, SphereDatasetSpec};
use crate::error::{Error, Result};
use crate::pca::fit_pca;
use crate::rvae::{encode_mean, reconstruct, train, LossMode, OutputGeometry, Sample, TrainedModel, TrainingConfig};
use crate::seeds::substream_seed;
use crate::sphere;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SphereDemoConfig {
    pub dataset: SphereDatasetSpec,
    /// Shared by both autoencoders; the latent dimension is forced to 1.
    pub training: TrainingConfig,
    /// Training runs per autoencoder; the run with the lowest final
    /// training loss is kept.
    pub restarts: usize,
    /// Samples of the true curve used for nearest-point distances.
    pub curve_resolution: usize,
}

impl Default for SphereDemoConfig {
    fn default() -> Self {
        SphereDemoConfig {
            dataset: SphereDatasetSpec::default(),
            training: TrainingConfig {
                latent_dim: 1,
                hidden: 64,
                decoder_hidden: 64,
                kl_weight: 1e-3,
                learning_rate: 3e-3,
                epochs: 4000,
                batch_size: 50,
                dropout_rate: 0.0,
                rng_seed: 0,
                loss_mode: LossMode::Geodesic,
            },
            restarts: 4,
            curve_resolution: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    /// Mean geodesic distance from each reconstruction to the curve point
    /// its sample was generated from.
    pub mean_geodesic_error: f64,
    /// Mean geodesic distance from each reconstruction to the nearest point
    /// of the true curve.
    pub mean_curve_distance: f64,
    /// Reconstructions on the unit sphere, one per data point.
    pub reconstructions: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereDemoResult {
    pub base_point: Vec<f64>,
    pub data: Vec<Vec<f64>>,
    pub curve: Vec<Vec<f64>>,
    pub methods: Vec<MethodResult>,
}

pub const METHODS: [&str; 4] = ["euclidean_pca", "euclidean_vae", "tangent_pca", "es_vae"];

impl SphereDemoResult {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from("method,mean_geodesic_error,mean_curve_distance\n");
        for m in &self.methods {
            out.push_str(&format!("{},{},{}\n", m.method, m.mean_geodesic_error, m.mean_curve_distance));
        }
        out
    }

    /// Long-format points: data, true curve and every reconstruction.
    pub fn points_csv(&self) -> String {
        let mut out = String::from("series,index,x,y,z\n");
        let mut push = |name: &str, pts: &[Vec<f64>]| {
            for (i, p) in pts.iter().enumerate() {
                out.push_str(&format!("{name},{i},{},{},{}\n", p[0], p[1], p[2]));
            }
        };
        push("data", &self.data);
        push("true_curve", &self.curve);
        for m in &self.methods {
            push(&m.method, &m.reconstructions);
        }
        out
    }
}

/// Normalized extrinsic mean, or the pole of the scatter matrix (smallest
/// eigenvector, sign chosen toward the data) when the mean is near zero.
pub fn base_point(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..3).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let r = sphere::norm(&mean);
    if r > 0.1 {
        return mean.iter().map(|v| v / r).collect();
    }
    let mut scatter = Matrix3::zeros();
    for p in points {
        for a in 0..3 {
            for b in 0..3 {
                scatter[(a, b)] += p[a] * p[b];
            }
        }
    }
    let eig = SymmetricEigen::new(scatter);
    let i = eig.eigenvalues.imin();
    let mut axis: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
    let big = axis.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
    if big < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
    axis
}

fn on_sphere(p: &[f64]) -> Result<Vec<f64>> {
    let r = sphere::norm(p);
    if !(r > 1e-12) || !r.is_finite() {
        return Err(Error::InvalidInput("reconstruction at the origin has no radial projection".into()));
    }
    Ok(p.iter().map(|v| v / r).collect())
}

fn fit_best(samples: &[Sample], geometry: &OutputGeometry, cfg: &TrainingConfig, restarts: usize) -> Result<TrainedModel> {
    let mut best: Option<TrainedModel> = None;
    for r in 0..restarts {
        let run = TrainingConfig {
            rng_seed: substream_seed(cfg.rng_seed, "restart", r as u64),
            ..cfg.clone()
        };
        let model = train(samples, geometry, &run)?;
        let loss = |m: &TrainedModel| m.history.last().map_or(f64::INFINITY, |l| l.total);
        if best.as_ref().is_none_or(|b| loss(&model) < loss(b)) {
            best = Some(model);
        }
    }
    best.ok_or_else(|| Error::InvalidInput("restarts must be at least 1".into()))
}

fn score(method: &str, recon: Vec<Vec<f64>>, truth: &[Vec<f64>], dense: &[Vec<f64>]) -> MethodResult {
    let n = recon.len() as f64;
    let err = recon.iter().zip(truth).map(|(r, c)| sphere::distance(r, c)).sum::<f64>() / n;
    let near = recon
        .iter()
        .map(|r| dense.iter().map(|c| sphere::distance(r, c)).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / n;
    MethodResult {
        method: method.to_string(),
        mean_geodesic_error: err,
        mean_curve_distance: near,
        reconstructions: recon,
    }
}

/// One-dimensional reconstructions of the noisy sphere data by Euclidean
/// PCA, a Euclidean VAE, tangent PCA and a sphere-output VAE. Euclidean
/// reconstructions are projected radially onto the sphere before scoring.
pub fn run_sphere_demo(cfg: &SphereDemoConfig) -> Result<SphereDemoResult> {
    if cfg.curve_resolution < 10 {
        return Err(Error::InvalidInput("curve_resolution must be at least 10".into()));
    }
    let ds = generate_sphere_dataset(&cfg.dataset)?;
    let dense: Vec<Vec<f64>> = (0..cfg.curve_resolution)
        .map(|i| sphere_curve(i as f64 / cfg.curve_resolution as f64, cfg.dataset.amplitude))
        .collect();
    let base = base_point(&ds.points);
    let training = TrainingConfig {
        latent_dim: 1,
        ..cfg.training.clone()
    };
    let mut methods = Vec::with_capacity(4);

    let pca = fit_pca(&ds.points, 1)?;
    let recon = ds
        .points
        .iter()
        .map(|p| on_sphere(&pca.reconstruct(&pca.project(p))))
        .collect::<Result<Vec<_>>>()?;
    methods.push(score(METHODS[0], recon, &ds.curve, &dense));

    let samples: Vec<Sample> = ds
        .points
        .iter()
        .map(|p| Sample {
            input: p.clone(),
            target: p.clone(),
        })
        .collect();
    let model = fit_best(&samples, &OutputGeometry::Euclidean, &training, cfg.restarts)?;
    let recon = samples
        .iter()
        .map(|s| {
            let z = encode_mean(&model.params, &s.input)?.posterior_mean;
            on_sphere(&reconstruct(&model.params, &z, &OutputGeometry::Euclidean)?)
        })
        .collect::<Result<Vec<_>>>()?;
    methods.push(score(METHODS[1], recon, &ds.curve, &dense));

    let logs = ds
        .points
        .iter()
        .map(|p| sphere::log(&base, p))
        .collect::<Result<Vec<_>>>()?;
    let tpca = fit_pca(&logs, 1)?;
    let recon = logs
        .iter()
        .map(|v| sphere::exp(&base, &sphere::project_tangent(&base, &tpca.reconstruct(&tpca.project(v)))))
        .collect::<Result<Vec<_>>>()?;
    methods.push(score(METHODS[2], recon, &ds.curve, &dense));

    let geometry = OutputGeometry::sphere(base.clone())?;
    let samples: Vec<Sample> = logs
        .iter()
        .zip(&ds.points)
        .map(|(v, p)| Sample {
            input: v.clone(),
            target: p.clone(),
        })
        .collect();
    let model = fit_best(&samples, &geometry, &training, cfg.restarts)?;
    let recon = samples
        .iter()
        .map(|s| {
            let z = encode_mean(&model.params, &s.input)?.posterior_mean;
            reconstruct(&model.params, &z, &geometry)
        })
        .collect::<Result<Vec<_>>>()?;
    methods.push(score(METHODS[3], recon, &ds.curve, &dense));

    Ok(SphereDemoResult {
        base_point: base,
        data: ds.points,
        curve: ds.curve,
        methods,
    })
}
