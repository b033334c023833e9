//! Variational autoencoder whose decoder output lives in a tangent space and
//! is mapped onto the manifold by the exponential map.
//!
//! The same network serves three output geometries: plain Euclidean vectors
//! (the classical VAE baseline), a single point on a unit sphere, and a
//! trajectory in Kendall shape space.

mod check;
mod network;
mod train;

pub use check::{finite_difference_check, TensorCheck};
pub use network::{LatentCode, NetworkParams};
pub use train::{initial_params, reorder_latents, train, TrainedModel};

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kendall::{self, PreShape};
use crate::sphere;
use crate::trajectory::{TangentField, Trajectory};

/// Reconstruction term of the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Squared geodesic distance between reconstruction and target.
    Geodesic,
    /// Squared error between the decoded field and the target's log map.
    TangentMse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub decoder_hidden: usize,
    pub kl_weight: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 means full-batch.
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub rng_seed: u64,
    pub loss_mode: LossMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig::stroke_profile()
    }
}

impl TrainingConfig {
    pub fn stroke_profile() -> Self {
        TrainingConfig {
            latent_dim: 38,
            hidden: 128,
            decoder_hidden: 16,
            kl_weight: 0.125,
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 0,
            dropout_rate: 0.1,
            rng_seed: 0,
            loss_mode: LossMode::Geodesic,
        }
    }

    pub fn ntu_profile() -> Self {
        TrainingConfig {
            latent_dim: 48,
            hidden: 768,
            decoder_hidden: 768,
            kl_weight: 1e-4,
            learning_rate: 1e-3,
            epochs: 150,
            batch_size: 64,
            dropout_rate: 0.1,
            rng_seed: 0,
            loss_mode: LossMode::Geodesic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if self.latent_dim == 0 || self.hidden == 0 || self.decoder_hidden == 0 {
            return bad("latent and hidden widths must be at least 1");
        }
        if !(self.kl_weight >= 0.0) || !self.kl_weight.is_finite() {
            return bad("kl_weight must be a finite non-negative number");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

/// Where decoder outputs live.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputGeometry {
    /// Outputs are used as-is; both loss modes reduce to squared error.
    Euclidean,
    /// Outputs are tangent vectors at `base` on the unit sphere.
    Sphere { base: Vec<f64> },
    /// Outputs are tangent fields along the mean trajectory.
    Kendall { mean: Trajectory },
}

struct Block<'a> {
    base: &'a [f64],
    offset: usize,
    /// `Some((k, m))` for shape frames: centered, compared modulo rotation.
    shape: Option<(usize, usize)>,
}

impl OutputGeometry {
    pub fn sphere(base: Vec<f64>) -> Result<Self> {
        if base.len() < 2 || (sphere::norm(&base) - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput("sphere base must be a unit vector".into()));
        }
        Ok(OutputGeometry::Sphere { base })
    }

    /// Required output dimension, or `None` when any is accepted.
    pub fn dim(&self) -> Option<usize> {
        match self {
            OutputGeometry::Euclidean => None,
            OutputGeometry::Sphere { base } => Some(base.len()),
            OutputGeometry::Kendall { mean } => Some(mean.len() * mean.k() * mean.m()),
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        match self.dim() {
            Some(e) if e != d => Err(Error::mismatch(e, d)),
            _ => Ok(()),
        }
    }

    fn blocks(&self) -> Vec<Block<'_>> {
        match self {
            OutputGeometry::Euclidean => Vec::new(),
            OutputGeometry::Sphere { base } => vec![Block {
                base,
                offset: 0,
                shape: None,
            }],
            OutputGeometry::Kendall { mean } => {
                let size = mean.k() * mean.m();
                mean.frames()
                    .iter()
                    .enumerate()
                    .map(|(t, f)| Block {
                        base: f.as_slice(),
                        offset: t * size,
                        shape: Some((mean.k(), mean.m())),
                    })
                    .collect()
            }
        }
    }

    /// Orthogonal projection of a raw output onto the tangent space.
    pub fn project(&self, raw: &[f64]) -> Vec<f64> {
        let blocks = self.blocks();
        if blocks.is_empty() {
            return raw.to_vec();
        }
        let mut out = vec![0.0; raw.len()];
        for b in &blocks {
            let n = b.base.len();
            let seg = &raw[b.offset..b.offset + n];
            let p = match b.shape {
                Some((_, m)) => kendall::project_tangent_raw(b.base, seg, m),
                None => sphere::project_tangent(b.base, seg),
            };
            out[b.offset..b.offset + n].copy_from_slice(&p);
        }
        out
    }

    /// Maps a tangent field onto the manifold.
    pub fn exp(&self, field: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(field.len())?;
        let blocks = self.blocks();
        if blocks.is_empty() {
            return Ok(field.to_vec());
        }
        let mut out = vec![0.0; field.len()];
        for (i, b) in blocks.iter().enumerate() {
            let n = b.base.len();
            let p = sphere::exp(b.base, &field[b.offset..b.offset + n]).map_err(|e| e.at_frame(i))?;
            out[b.offset..b.offset + n].copy_from_slice(&p);
        }
        Ok(out)
    }

    /// Log map of manifold points at the base, the inverse of [`exp`](Self::exp).
    pub fn log(&self, points: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(points.len())?;
        let blocks = self.blocks();
        if blocks.is_empty() {
            return Ok(points.to_vec());
        }
        let mut out = vec![0.0; points.len()];
        for (i, b) in blocks.iter().enumerate() {
            let n = b.base.len();
            let v = sphere::log(b.base, &points[b.offset..b.offset + n]).map_err(|e| e.at_frame(i))?;
            out[b.offset..b.offset + n].copy_from_slice(&v);
        }
        Ok(out)
    }

    /// Reconstruction loss of a raw decoder output and its gradient with
    /// respect to that raw output.
    pub fn reconstruction(&self, raw: &[f64], target: &[f64], mode: LossMode) -> Result<(f64, Vec<f64>)> {
        self.check_dim(raw.len())?;
        if raw.len() != target.len() {
            return Err(Error::mismatch(raw.len(), target.len()));
        }
        let blocks = self.blocks();
        if blocks.is_empty() {
            return Ok(squared_error(raw, target));
        }
        let u = self.project(raw);
        let (loss, grad_u) = match mode {
            LossMode::TangentMse => squared_error(&u, &self.log(target)?),
            LossMode::Geodesic => {
                let mut loss = 0.0;
                let mut grad = vec![0.0; raw.len()];
                for (i, b) in blocks.iter().enumerate() {
                    let n = b.base.len();
                    let range = b.offset..b.offset + n;
                    let (l, g) = geodesic_block(b, &u[range.clone()], &target[range.clone()])
                        .map_err(|e| e.at_frame(i))?;
                    loss += l;
                    grad[range].copy_from_slice(&g);
                }
                (loss, grad)
            }
        };
        // The projection is self-adjoint.
        Ok((loss, self.project(&grad_u)))
    }
}

fn squared_error(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let loss = diff.iter().map(|d| d * d).sum();
    (loss, diff.into_iter().map(|d| 2.0 * d).collect())
}

/// `d(Exp_base(u), target)²` and its gradient in `u`, with the optimal
/// rotation of the target held fixed.
fn geodesic_block(b: &Block<'_>, u: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let xhat = sphere::exp(b.base, u)?;
    let y = match b.shape {
        Some((k, m)) => {
            let r = kendall::optimal_rotation_raw(&xhat, target, k, m).rotation;
            kendall::rotate_rows(target, k, m, &r)
        }
        None => target.to_vec(),
    };
    let d = sphere::distance(&xhat, &y);
    let log = sphere::log(&xhat, &y)?;
    let cot: Vec<f64> = log.iter().map(|x| -2.0 * x).collect();
    Ok((d * d, sphere::exp_adjoint(b.base, u, &cot)))
}

/// ½ Σ (σ² + μ² − 1 − log σ²).
pub fn kl_divergence(code: &LatentCode) -> f64 {
    kl_terms(&code.posterior_mean, &code.posterior_logvar)
}

fn kl_terms(mean: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mean
        .iter()
        .zip(logvar)
        .map(|(mu, lv)| lv.exp() + mu * mu - 1.0 - lv)
        .sum::<f64>()
}

/// Σ_t d_Σ(target(t), reconstructed(t))².
pub fn reconstruction_loss_geodesic(target: &Trajectory, reconstructed: &Trajectory) -> Result<f64> {
    if target.len() != reconstructed.len() {
        return Err(Error::mismatch(target.len(), reconstructed.len()));
    }
    Ok(target
        .frames()
        .iter()
        .zip(reconstructed.frames())
        .map(|(a, b)| kendall::shape_distance(a, b).powi(2))
        .sum())
}

/// Sum of squared entry-wise differences.
pub fn reconstruction_loss_tangent(target: &TangentField, decoded: &TangentField) -> Result<f64> {
    let (a, b) = (target.to_flat(), decoded.to_flat());
    if a.len() != b.len() || target.len() != decoded.len() {
        return Err(Error::mismatch(a.len(), b.len()));
    }
    Ok(squared_error(&a, &b).0)
}

/// One training example: encoder input and the manifold point it should
/// reconstruct (flattened; a trajectory of preshapes for Kendall output).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Dropout keep-mask (already scaled by 1/(1−p)) and reparameterization
/// noise for one sample.
#[derive(Clone, Debug)]
pub struct Noise {
    pub mask: Vec<f64>,
    pub eps: Vec<f64>,
}

impl Noise {
    pub fn draw(rng: &mut impl Rng, hidden: usize, latent: usize, dropout: f64) -> Self {
        let mask = if dropout > 0.0 {
            let keep = Bernoulli::new(1.0 - dropout).expect("dropout in [0, 1)");
            (0..hidden)
                .map(|_| if keep.sample(rng) { 1.0 / (1.0 - dropout) } else { 0.0 })
                .collect()
        } else {
            vec![1.0; hidden]
        };
        let eps = (0..latent).map(|_| rng.sample(StandardNormal)).collect();
        Noise { mask, eps }
    }

    fn none(hidden: usize, latent: usize) -> Self {
        Noise {
            mask: vec![1.0; hidden],
            eps: vec![0.0; latent],
        }
    }
}

/// Encodes one input. With `dropout_active` a dropout mask and
/// reparameterization noise are drawn from `rng`; otherwise `z` is the
/// posterior mean.
pub fn encode(params: &NetworkParams, v: &[f64], dropout_active: bool, dropout_rate: f64, rng: &mut impl Rng) -> Result<LatentCode> {
    params.check_input(v)?;
    let noise = if dropout_active {
        Noise::draw(rng, params.hidden(), params.latent(), dropout_rate)
    } else {
        Noise::none(params.hidden(), params.latent())
    };
    Ok(params.encoder_forward(v, &noise).code())
}

/// Deterministic inference-time encoding.
pub fn encode_mean(params: &NetworkParams, v: &[f64]) -> Result<LatentCode> {
    params.check_input(v)?;
    Ok(params
        .encoder_forward(v, &Noise::none(params.hidden(), params.latent()))
        .code())
}

/// Decoder output projected to the tangent space of the geometry.
pub fn decode(params: &NetworkParams, z: &[f64], geometry: &OutputGeometry) -> Result<Vec<f64>> {
    if z.len() != params.latent() {
        return Err(Error::mismatch(params.latent(), z.len()));
    }
    geometry.check_dim(params.output_dim())?;
    Ok(geometry.project(&params.decoder_forward(z).raw))
}

/// Decoded field mapped onto the manifold.
pub fn reconstruct(params: &NetworkParams, z: &[f64], geometry: &OutputGeometry) -> Result<Vec<f64>> {
    geometry.exp(&decode(params, z, geometry)?)
}

/// Reconstruction as a trajectory; requires Kendall geometry.
pub fn reconstruct_trajectory(params: &NetworkParams, z: &[f64], geometry: &OutputGeometry) -> Result<Trajectory> {
    let OutputGeometry::Kendall { mean } = geometry else {
        return Err(Error::InvalidInput("trajectory output needs Kendall geometry".into()));
    };
    let flat = reconstruct(params, z, geometry)?;
    let size = mean.k() * mean.m();
    Trajectory::new(
        flat.chunks(size)
            .map(|c| PreShape::renormalized(mean.k(), mean.m(), c.to_vec()))
            .collect(),
    )
}

/// Samples are processed in fixed-size chunks whose partial gradients are
/// summed in chunk order, so results do not depend on the thread count.
const GRAD_CHUNK: usize = 16;

/// Mean loss over the batch and its exact gradient with respect to every
/// parameter. Dropout masks and noise are drawn from `rng`, one sample at a
/// time in batch order.
pub fn loss_and_gradient(
    params: &NetworkParams,
    batch: &[Sample],
    geometry: &OutputGeometry,
    cfg: &TrainingConfig,
    rng: &mut impl Rng,
) -> Result<(LossBreakdown, NetworkParams)> {
    if batch.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    geometry.check_dim(params.output_dim())?;
    for s in batch {
        params.check_input(&s.input)?;
        if s.target.len() != params.output_dim() {
            return Err(Error::mismatch(params.output_dim(), s.target.len()));
        }
    }
    let noises: Vec<Noise> = batch
        .iter()
        .map(|_| Noise::draw(rng, params.hidden(), params.latent(), cfg.dropout_rate))
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let beta = cfg.kl_weight;

    let partials: Vec<(f64, f64, NetworkParams)> = batch
        .par_chunks(GRAD_CHUNK)
        .zip(noises.par_chunks(GRAD_CHUNK))
        .map(|(samples, noises)| {
            let mut grad = params.zeros_like();
            let (mut recon, mut kl) = (0.0, 0.0);
            for (s, noise) in samples.iter().zip(noises) {
                let enc = params.encoder_forward(&s.input, noise);
                let dec = params.decoder_forward(&enc.z);
                let (r, g_raw) = geometry.reconstruction(&dec.raw, &s.target, cfg.loss_mode)?;
                recon += r;
                kl += kl_terms(&enc.mean, &enc.logvar);
                let g_raw: Vec<f64> = g_raw.iter().map(|g| g * scale).collect();
                params.backward(&s.input, noise, &enc, &dec, &g_raw, beta * scale, &mut grad);
            }
            Ok((recon, kl, grad))
        })
        .collect::<Result<_>>()?;

    let mut grad = params.zeros_like();
    let (mut recon, mut kl) = (0.0, 0.0);
    for (r, k, g) in partials {
        recon += r;
        kl += k;
        grad.add_assign(&g);
    }
    let reconstruction = recon * scale;
    let kl = kl * scale;
    Ok((
        LossBreakdown {
            reconstruction,
            kl,
            total: reconstruction + beta * kl,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests;
