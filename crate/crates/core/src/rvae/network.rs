use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Noise;
use crate::error::{Error, Result};

/// Encoder `D→H` with mean and log-variance heads `H→L`; decoder `L→H′→D`.
/// Weight matrices are row-major `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    d: usize,
    h: usize,
    h_dec: usize,
    l: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w_mu: Vec<f64>,
    pub b_mu: Vec<f64>,
    pub w_logvar: Vec<f64>,
    pub b_logvar: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    pub z: Vec<f64>,
    pub posterior_mean: Vec<f64>,
    pub posterior_logvar: Vec<f64>,
}

pub(crate) struct EncoderPass {
    pub a1: Vec<f64>,
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
    pub z: Vec<f64>,
}

impl EncoderPass {
    pub fn code(self) -> LatentCode {
        LatentCode {
            z: self.z,
            posterior_mean: self.mean,
            posterior_logvar: self.logvar,
        }
    }
}

pub(crate) struct DecoderPass {
    pub a2: Vec<f64>,
    pub raw: Vec<f64>,
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    b.iter()
        .zip(w.chunks_exact(n))
        .map(|(bi, row)| bi + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

/// `out += Wᵀ g`.
fn affine_transpose(w: &[f64], g: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (gi, row) in g.iter().zip(w.chunks_exact(n)) {
        if *gi != 0.0 {
            out.iter_mut().zip(row).for_each(|(o, a)| *o += gi * a);
        }
    }
}

/// `gw += g xᵀ`, `gb += g`.
fn accumulate_outer(gw: &mut [f64], gb: &mut [f64], g: &[f64], x: &[f64]) {
    let n = x.len();
    for ((gi, row), bi) in g.iter().zip(gw.chunks_exact_mut(n)).zip(gb.iter_mut()) {
        *bi += gi;
        if *gi != 0.0 {
            row.iter_mut().zip(x).for_each(|(o, xv)| *o += gi * xv);
        }
    }
}

impl NetworkParams {
    pub fn zeros(d: usize, h: usize, h_dec: usize, l: usize) -> Self {
        NetworkParams {
            d,
            h,
            h_dec,
            l,
            w1: vec![0.0; h * d],
            b1: vec![0.0; h],
            w_mu: vec![0.0; l * h],
            b_mu: vec![0.0; l],
            w_logvar: vec![0.0; l * h],
            b_logvar: vec![0.0; l],
            w2: vec![0.0; h_dec * l],
            b2: vec![0.0; h_dec],
            w3: vec![0.0; d * h_dec],
            b3: vec![0.0; d],
        }
    }

    /// Uniform in ±1/√fan_in for every weight and bias.
    pub fn random(d: usize, h: usize, h_dec: usize, l: usize, rng: &mut impl Rng) -> Self {
        let mut p = NetworkParams::zeros(d, h, h_dec, l);
        let fan_ins = [d, d, h, h, h, h, l, l, h_dec, h_dec];
        for ((_, t), fan_in) in p.tensors_mut().into_iter().zip(fan_ins) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            t.iter_mut().for_each(|x| *x = rng.random_range(-bound..bound));
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> usize {
        self.h
    }

    pub fn decoder_hidden(&self) -> usize {
        self.h_dec
    }

    pub fn latent(&self) -> usize {
        self.l
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams::zeros(self.d, self.h, self.h_dec, self.l)
    }

    pub fn tensors(&self) -> [(&'static str, &Vec<f64>); 10] {
        [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w_mu", &self.w_mu),
            ("b_mu", &self.b_mu),
            ("w_logvar", &self.w_logvar),
            ("b_logvar", &self.b_logvar),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("w3", &self.w3),
            ("b3", &self.b3),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 10] {
        [
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w_mu", &mut self.w_mu),
            ("b_mu", &mut self.b_mu),
            ("w_logvar", &mut self.w_logvar),
            ("b_logvar", &mut self.b_logvar),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
            ("w3", &mut self.w3),
            ("b3", &mut self.b3),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Checks that every tensor has the length implied by the dimensions.
    pub fn validate(&self) -> Result<()> {
        let (d, h, hd, l) = (self.d, self.h, self.h_dec, self.l);
        let expected = [h * d, h, l * h, l, l * h, l, hd * l, hd, d * hd, d];
        for ((name, t), e) in self.tensors().iter().zip(expected) {
            if t.len() != e {
                return Err(Error::Format(format!("tensor {name} has {} entries, expected {e}", t.len())));
            }
        }
        if !self.is_finite() {
            return Err(Error::Format("non-finite parameter".into()));
        }
        Ok(())
    }

    pub(crate) fn add_assign(&mut self, other: &NetworkParams) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b.iter()).for_each(|(x, y)| *x += y);
        }
    }

    pub(crate) fn check_input(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.d {
            return Err(Error::mismatch(self.d, v.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite encoder input".into()));
        }
        Ok(())
    }

    pub(crate) fn encoder_forward(&self, v: &[f64], noise: &Noise) -> EncoderPass {
        let a1: Vec<f64> = affine(&self.w1, &self.b1, v).into_iter().map(f64::tanh).collect();
        let dropped: Vec<f64> = a1.iter().zip(&noise.mask).map(|(a, m)| a * m).collect();
        let mean = affine(&self.w_mu, &self.b_mu, &dropped);
        let logvar = affine(&self.w_logvar, &self.b_logvar, &dropped);
        let z = mean
            .iter()
            .zip(&logvar)
            .zip(&noise.eps)
            .map(|((mu, lv), e)| mu + (0.5 * lv).exp() * e)
            .collect();
        EncoderPass { a1, mean, logvar, z }
    }

    pub(crate) fn decoder_forward(&self, z: &[f64]) -> DecoderPass {
        let a2: Vec<f64> = affine(&self.w2, &self.b2, z).into_iter().map(f64::tanh).collect();
        let raw = affine(&self.w3, &self.b3, &a2);
        DecoderPass { a2, raw }
    }

    /// Accumulates into `grad` the gradient of
    /// `⟨g_raw, raw⟩ + kl_scale · KL` for one sample.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        v: &[f64],
        noise: &Noise,
        enc: &EncoderPass,
        dec: &DecoderPass,
        g_raw: &[f64],
        kl_scale: f64,
        grad: &mut NetworkParams,
    ) {
        accumulate_outer(&mut grad.w3, &mut grad.b3, g_raw, &dec.a2);
        let mut g_a2 = vec![0.0; self.h_dec];
        affine_transpose(&self.w3, g_raw, &mut g_a2);
        let g_h2: Vec<f64> = g_a2.iter().zip(&dec.a2).map(|(g, a)| g * (1.0 - a * a)).collect();
        accumulate_outer(&mut grad.w2, &mut grad.b2, &g_h2, &enc.z);
        let mut g_z = vec![0.0; self.l];
        affine_transpose(&self.w2, &g_h2, &mut g_z);

        let g_mean: Vec<f64> = g_z.iter().zip(&enc.mean).map(|(g, mu)| g + kl_scale * mu).collect();
        let g_logvar: Vec<f64> = g_z
            .iter()
            .zip(&enc.logvar)
            .zip(&noise.eps)
            .map(|((g, lv), e)| g * e * 0.5 * (0.5 * lv).exp() + kl_scale * 0.5 * (lv.exp() - 1.0))
            .collect();
        let dropped: Vec<f64> = enc.a1.iter().zip(&noise.mask).map(|(a, m)| a * m).collect();
        accumulate_outer(&mut grad.w_mu, &mut grad.b_mu, &g_mean, &dropped);
        accumulate_outer(&mut grad.w_logvar, &mut grad.b_logvar, &g_logvar, &dropped);
        let mut g_d = vec![0.0; self.h];
        affine_transpose(&self.w_mu, &g_mean, &mut g_d);
        affine_transpose(&self.w_logvar, &g_logvar, &mut g_d);
        let g_h1: Vec<f64> = g_d
            .iter()
            .zip(&noise.mask)
            .zip(&enc.a1)
            .map(|((g, m), a)| g * m * (1.0 - a * a))
            .collect();
        accumulate_outer(&mut grad.w1, &mut grad.b1, &g_h1, v);
    }

    /// Reorders latent dimensions: new dimension `i` is old dimension `perm[i]`.
    pub fn permute_latents(&self, perm: &[usize]) -> Result<NetworkParams> {
        let mut seen = vec![false; self.l];
        if perm.len() != self.l || perm.iter().any(|&p| p >= self.l || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidInput("not a permutation of the latent dimensions".into()));
        }
        let mut out = self.clone();
        let h = self.h;
        for (i, &p) in perm.iter().enumerate() {
            out.w_mu[i * h..(i + 1) * h].copy_from_slice(&self.w_mu[p * h..(p + 1) * h]);
            out.w_logvar[i * h..(i + 1) * h].copy_from_slice(&self.w_logvar[p * h..(p + 1) * h]);
            out.b_mu[i] = self.b_mu[p];
            out.b_logvar[i] = self.b_logvar[p];
            for r in 0..self.h_dec {
                out.w2[r * self.l + i] = self.w2[r * self.l + p];
            }
        }
        Ok(out)
    }
}
