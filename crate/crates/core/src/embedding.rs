//! Autoencoder embeddings of the one-hot categorical block.
//!
//! The encoder and decoder are affine with identity activation; the decoder
//! output is passed through a softmax per categorical variable and trained
//! with cross-entropy.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::OneHotMatrix;
use crate::error::{Error, Result};
use crate::math::{exp, ln, mean, sample_sd, sqrt};
use crate::rng::{self, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub blocks: Vec<usize>,
    pub dim: usize,
    /// `dim x width`, row-major.
    pub w_enc: Vec<f64>,
    pub b_enc: Vec<f64>,
    /// `width x dim`, row-major.
    pub w_dec: Vec<f64>,
    pub b_dec: Vec<f64>,
    pub scaled: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam state over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One update; entries with `trainable[i] == false` are left alone.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], trainable: Option<&[bool]>) {
        self.t += 1;
        let c = &self.config;
        let bc1 = 1.0 - crate::math::pow(c.beta1, self.t as f64);
        let bc2 = 1.0 - crate::math::pow(c.beta2, self.t as f64);
        for i in 0..params.len() {
            if trainable.is_some_and(|t| !t[i]) {
                continue;
            }
            let g = grad[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= c.learning_rate * mh / (sqrt(vh) + c.epsilon);
        }
    }
}

/// Uniform draws in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot(rng: &mut Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let a = sqrt(6.0 / (fan_in + fan_out) as f64);
    (0..n).map(|_| rng.random_range(-a..=a)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub validation_share: f64,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 1000,
            validation_share: 0.2,
            patience: 20,
            max_epochs: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeFit {
    pub model: Autoencoder,
    /// Mean cross-entropy per observation over all rows passed in.
    pub train_loss: f64,
    pub best_validation_loss: f64,
    pub epochs: usize,
    pub warnings: Vec<String>,
}

impl Autoencoder {
    pub fn width(&self) -> usize {
        self.blocks.iter().sum()
    }

    /// Zero-initialised autoencoder.
    pub fn zeros(blocks: Vec<usize>, dim: usize) -> Self {
        let width: usize = blocks.iter().sum();
        Self {
            blocks,
            dim,
            w_enc: vec![0.0; dim * width],
            b_enc: vec![0.0; dim],
            w_dec: vec![0.0; width * dim],
            b_dec: vec![0.0; width],
            scaled: false,
        }
    }

    fn random(blocks: Vec<usize>, dim: usize, rng: &mut Rng) -> Self {
        let mut ae = Self::zeros(blocks, dim);
        let width = ae.width();
        ae.w_enc = glorot(rng, width, dim, dim * width);
        ae.w_dec = glorot(rng, dim, width, width * dim);
        ae
    }

    /// Code of a row given by its hot column indices.
    pub fn encode_hot(&self, hot: &[usize]) -> Vec<f64> {
        let width = self.width();
        let mut z = self.b_enc.clone();
        for (k, zk) in z.iter_mut().enumerate() {
            for &h in hot {
                *zk += self.w_enc[k * width + h];
            }
        }
        z
    }

    /// Code of a dense one-hot row.
    pub fn encode(&self, row: &[f64]) -> Result<Vec<f64>> {
        let width = self.width();
        if row.len() != width {
            return Err(Error::LengthMismatch {
                expected: width,
                actual: row.len(),
            });
        }
        Ok((0..self.dim)
            .map(|k| {
                self.b_enc[k]
                    + self.w_enc[k * width..(k + 1) * width]
                        .iter()
                        .zip(row)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect())
    }

    fn logits(&self, code: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..self.width())
            .map(|r| {
                self.b_dec[r]
                    + self.w_dec[r * d..(r + 1) * d]
                        .iter()
                        .zip(code)
                        .map(|(w, z)| w * z)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Per-block softmax of the decoder output.
    pub fn decode_softmax(&self, code: &[f64]) -> Result<Vec<f64>> {
        if code.len() != self.dim {
            return Err(Error::LengthMismatch {
                expected: self.dim,
                actual: code.len(),
            });
        }
        let mut p = self.logits(code);
        block_softmax(&self.blocks, &mut p);
        Ok(p)
    }

    /// Cross-entropy of one row: `-sum_j ln p_j(hot_j)`.
    pub fn row_loss(&self, hot: &[usize]) -> f64 {
        let mut p = self.logits(&self.encode_hot(hot));
        block_log_softmax(&self.blocks, &mut p);
        -hot.iter().map(|&h| p[h]).sum::<f64>()
    }

    /// Mean cross-entropy per observation.
    pub fn loss(&self, x: &OneHotMatrix) -> f64 {
        let patterns = Patterns::new(x, &(0..x.n_rows()).collect::<Vec<_>>());
        patterns
            .iter()
            .map(|(hot, c)| c as f64 * self.row_loss(hot))
            .sum::<f64>()
            / x.n_rows().max(1) as f64
    }
}

pub fn block_softmax(blocks: &[usize], v: &mut [f64]) {
    let mut off = 0;
    for &b in blocks {
        let s = &mut v[off..off + b];
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut tot = 0.0;
        for x in s.iter_mut() {
            *x = exp(*x - m);
            tot += *x;
        }
        for x in s.iter_mut() {
            *x /= tot;
        }
        off += b;
    }
}

fn block_log_softmax(blocks: &[usize], v: &mut [f64]) {
    let mut off = 0;
    for &b in blocks {
        let s = &mut v[off..off + b];
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + ln(s.iter().map(|x| exp(x - m)).sum::<f64>());
        for x in s.iter_mut() {
            *x -= lse;
        }
        off += b;
    }
}

/// Distinct hot patterns with multiplicities; loss and gradient of a batch
/// only depend on these.
struct Patterns {
    hot: Vec<Vec<usize>>,
    count: Vec<usize>,
}

impl Patterns {
    fn new(x: &OneHotMatrix, rows: &[usize]) -> Self {
        let mut map: BTreeMap<&[usize], usize> = BTreeMap::new();
        for &i in rows {
            *map.entry(x.hot(i)).or_insert(0) += 1;
        }
        let (hot, count) = map.into_iter().map(|(h, c)| (h.to_vec(), c)).unzip();
        Self { hot, count }
    }

    fn iter(&self) -> impl Iterator<Item = (&[usize], usize)> {
        self.hot.iter().map(|h| h.as_slice()).zip(self.count.iter().copied())
    }
}

/// Flat parameter layout: `w_enc | b_enc | w_dec | b_dec`.
fn flatten(ae: &Autoencoder) -> Vec<f64> {
    let mut p = ae.w_enc.clone();
    p.extend_from_slice(&ae.b_enc);
    p.extend_from_slice(&ae.w_dec);
    p.extend_from_slice(&ae.b_dec);
    p
}

fn unflatten(ae: &mut Autoencoder, p: &[f64]) {
    let (a, b, c) = (ae.w_enc.len(), ae.b_enc.len(), ae.w_dec.len());
    ae.w_enc.copy_from_slice(&p[..a]);
    ae.b_enc.copy_from_slice(&p[a..a + b]);
    ae.w_dec.copy_from_slice(&p[a + b..a + b + c]);
    ae.b_dec.copy_from_slice(&p[a + b + c..]);
}

/// Gradient of the summed cross-entropy over `patterns`, accumulated into `g`.
fn accumulate_gradient(ae: &Autoencoder, patterns: &Patterns, g: &mut [f64]) {
    let (width, d) = (ae.width(), ae.dim);
    let (o_benc, o_wdec) = (d * width, d * width + d);
    let o_bdec = o_wdec + width * d;
    for (hot, c) in patterns.iter() {
        let c = c as f64;
        let z = ae.encode_hot(hot);
        let mut p = ae.logits(&z);
        block_softmax(&ae.blocks, &mut p);
        for &h in hot {
            p[h] -= 1.0;
        }
        // p now holds dL/dlogits
        let mut dz = vec![0.0; d];
        for r in 0..width {
            let gr = c * p[r];
            g[o_bdec + r] += gr;
            for k in 0..d {
                g[o_wdec + r * d + k] += gr * z[k];
                dz[k] += gr * ae.w_dec[r * d + k];
            }
        }
        for k in 0..d {
            g[o_benc + k] += dz[k];
            for &h in hot {
                g[k * width + h] += dz[k];
            }
        }
    }
}

/// Trains an autoencoder of dimension `dim` on all rows of `x`, holding out
/// a random share for early stopping.
pub fn train_autoencoder(x: &OneHotMatrix, dim: usize, seed: u64, config: &AeConfig) -> Result<AeFit> {
    if dim == 0 {
        return Err(Error::InvalidInput("embedding dimension must be at least 1".into()));
    }
    let n = x.n_rows();
    if n < 2 {
        return Err(Error::Empty("autoencoder training rows"));
    }
    if x.n_blocks() == 0 {
        return Err(Error::InvalidInput("no categorical variables to embed".into()));
    }
    let mut warnings = Vec::new();
    if dim >= x.width() {
        warnings.push(format!(
            "embedding dimension {dim} is not below the one-hot width {}: no compression",
            x.width()
        ));
    }
    let mut rng = rng::stream(seed, "autoencoder", dim as u64);
    let mut ae = Autoencoder::random(x.blocks.clone(), dim, &mut rng);
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    let n_val = ((config.validation_share * n as f64) as usize).clamp(1, n - 1);
    let (val_rows, train_rows) = rows.split_at(n_val);
    let mut train_rows = train_rows.to_vec();
    let val = Patterns::new(x, val_rows);
    let val_loss = |ae: &Autoencoder| val.iter().map(|(h, c)| c as f64 * ae.row_loss(h)).sum::<f64>() / n_val as f64;

    let mut params = flatten(&ae);
    let mut adam = Adam::new(config.adam, params.len());
    let mut grad = vec![0.0; params.len()];
    let mut best = (val_loss(&ae), params.clone());
    let mut since_best = 0;
    let mut epochs = 0;
    for epoch in 0..config.max_epochs {
        epochs = epoch + 1;
        train_rows.shuffle(&mut rng);
        for batch in train_rows.chunks(config.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            accumulate_gradient(&ae, &Patterns::new(x, batch), &mut grad);
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params, &grad, None);
            unflatten(&mut ae, &params);
        }
        let v = val_loss(&ae);
        if !v.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if v < best.0 {
            best = (v, params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    unflatten(&mut ae, &best.1);
    Ok(AeFit {
        train_loss: ae.loss(x),
        model: ae,
        best_validation_loss: best.0,
        epochs,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionChoice {
    pub dim: usize,
    /// `(dimension, training cross-entropy per observation)` per candidate tried.
    pub losses: Vec<(usize, f64)>,
    pub fit: AeFit,
    pub warning: Option<String>,
}

pub const DEFAULT_DIMENSIONS: [usize; 3] = [5, 10, 15];
pub const DEFAULT_CE_THRESHOLD: f64 = 0.001;

/// Smallest candidate dimension whose training cross-entropy per
/// observation is below `threshold`; the largest candidate otherwise.
pub fn select_dimension(
    x: &OneHotMatrix,
    candidates: &[usize],
    threshold: f64,
    seed: u64,
    config: &AeConfig,
) -> Result<DimensionChoice> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate dimensions"));
    }
    if candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "candidate dimensions must be strictly increasing".into(),
        ));
    }
    let mut losses = Vec::new();
    let mut last = None;
    for &d in candidates {
        let fit = train_autoencoder(x, d, seed, config)?;
        losses.push((d, fit.train_loss));
        if fit.train_loss < threshold {
            return Ok(DimensionChoice {
                dim: d,
                losses,
                fit,
                warning: None,
            });
        }
        last = Some(fit);
    }
    let fit = last.ok_or(Error::Empty("candidate dimensions"))?;
    Ok(DimensionChoice {
        dim: fit.model.dim,
        warning: Some(format!(
            "no candidate reached cross-entropy {threshold}; using the largest dimension {}",
            fit.model.dim
        )),
        losses,
        fit,
    })
}

/// Standardises the encoder so that the codes of `x` have sample mean 0 and
/// standard deviation 1: row `k` of the weights is divided by `sd_k` and the
/// bias becomes `(b_k - mean_k) / sd_k`.
pub fn scale_encoder(ae: &Autoencoder, x: &OneHotMatrix) -> Result<Autoencoder> {
    if ae.scaled {
        return Err(Error::InvalidInput("encoder is already scaled".into()));
    }
    if x.n_rows() < 2 {
        return Err(Error::Empty("rows for encoder scaling"));
    }
    let codes: Vec<Vec<f64>> = (0..x.n_rows()).map(|i| ae.encode_hot(x.hot(i))).collect();
    let width = ae.width();
    let mut out = ae.clone();
    for k in 0..ae.dim {
        let col: Vec<f64> = codes.iter().map(|c| c[k]).collect();
        let (mu, sd) = (mean(&col), sample_sd(&col));
        if !(sd > 1e-12 * (1.0 + mu.abs())) {
            return Err(Error::DeadCodeNode { node: k });
        }
        for w in &mut out.w_enc[k * width..(k + 1) * width] {
            *w /= sd;
        }
        out.b_enc[k] = (ae.b_enc[k] - mu) / sd;
    }
    out.scaled = true;
    Ok(out)
}
