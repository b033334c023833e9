use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_gradient, LatentCode, LossBreakdown, NetworkParams, OutputGeometry, Sample, TrainingConfig};
use crate::error::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

// Independent random streams derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_NOISE: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: NetworkParams,
    /// Sample-weighted mean loss of each epoch, measured during the epoch.
    pub history: Vec<LossBreakdown>,
}

const OUTPUT_INIT_SCALE: f64 = 0.1;

struct Adam {
    m: NetworkParams,
    v: NetworkParams,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(p: &NetworkParams, lr: f64) -> Self {
        Adam {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut NetworkParams, grad: &NetworkParams) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Initial parameters for a run seed.
/// The output layer is shrunk so initial decoded fields stay well inside
/// the injectivity radius of every frame.
pub fn initial_params(d: usize, cfg: &TrainingConfig) -> NetworkParams {
    let mut p = NetworkParams::random(d, cfg.hidden, cfg.decoder_hidden, cfg.latent_dim, &mut stream(cfg.rng_seed, STREAM_INIT));
    for v in p.w3.iter_mut().chain(p.b3.iter_mut()) {
        *v *= OUTPUT_INIT_SCALE;
    }
    p
}

/// Minibatch Adam on the mean loss. Fully determined by `cfg.rng_seed`.
pub fn train(samples: &[Sample], geometry: &OutputGeometry, cfg: &TrainingConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let first = samples.first().ok_or(Error::EmptyTrainingSet)?;
    let d = first.input.len();
    let mut params = initial_params(d, cfg);
    let mut adam = Adam::new(&params, cfg.learning_rate);
    let mut shuffle_rng = stream(cfg.rng_seed, STREAM_SHUFFLE);
    let mut noise_rng = stream(cfg.rng_seed, STREAM_NOISE);
    let batch_size = if cfg.batch_size == 0 { samples.len() } else { cfg.batch_size };

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch = Vec::with_capacity(batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut acc = LossBreakdown::default();
        for (b, idx) in order.chunks(batch_size).enumerate() {
            batch.clear();
            batch.extend(idx.iter().map(|&i| samples[i].clone()));
            let diverged = || Error::TrainingDiverged {
                epoch,
                batch: b,
                history: history.clone(),
            };
            let (loss, grad) = match loss_and_gradient(&params, &batch, geometry, cfg, &mut noise_rng) {
                Ok(r) => r,
                Err(Error::Frame { .. }) | Err(Error::OutOfInjectivityRadius { .. }) | Err(Error::AntipodalPoints { .. }) => {
                    return Err(diverged())
                }
                Err(e) => return Err(e),
            };
            if !loss.total.is_finite() || !grad.is_finite() {
                return Err(diverged());
            }
            adam.step(&mut params, &grad);
            if !params.is_finite() {
                return Err(diverged());
            }
            let w = idx.len() as f64 / samples.len() as f64;
            acc.reconstruction += w * loss.reconstruction;
            acc.kl += w * loss.kl;
            acc.total += w * loss.total;
        }
        history.push(acc);
    }
    Ok(TrainedModel { params, history })
}

/// Sorts latent dimensions by decreasing variance of the posterior means.
/// Returns the permutation (new index `i` holds old dimension `perm[i]`),
/// the conjugated parameters and the reordered codes.
pub fn reorder_latents(params: &NetworkParams, codes: &[LatentCode]) -> Result<(Vec<usize>, NetworkParams, Vec<LatentCode>)> {
    if codes.len() < 2 {
        return Err(Error::InvalidInput("reordering needs at least two codes".into()));
    }
    let l = params.latent();
    let n = codes.len() as f64;
    let variances: Vec<f64> = (0..l)
        .map(|j| {
            let mean = codes.iter().map(|c| c.posterior_mean[j]).sum::<f64>() / n;
            codes.iter().map(|c| (c.posterior_mean[j] - mean).powi(2)).sum::<f64>() / n
        })
        .collect();
    let mut perm: Vec<usize> = (0..l).collect();
    perm.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]));
    let reordered = params.permute_latents(&perm)?;
    let pick = |v: &[f64]| perm.iter().map(|&p| v[p]).collect::<Vec<f64>>();
    let codes = codes
        .iter()
        .map(|c| LatentCode {
            z: pick(&c.z),
            posterior_mean: pick(&c.posterior_mean),
            posterior_logvar: pick(&c.posterior_logvar),
        })
        .collect();
    Ok((perm, reordered, codes))
}
