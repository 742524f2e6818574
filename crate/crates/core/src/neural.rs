//! Feed-forward networks with exponential output and combined actuarial
//! networks (CANN) that adjust an initial model through a skip connection:
//! `f(x) = exp(w_nn * s(x) + w_in * ln f_init(x) + b)`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Feature, FoldPlan, ScalingStats};
use crate::embedding::{glorot, Adam, AdamConfig, Autoencoder};
use crate::error::{Error, Result};
use crate::evaluation::{gamma_deviance, poisson_deviance};
use crate::glm::Family;
use crate::math::{exp, floor, ln, ylogy_over};
use crate::model::{Model, Predictor};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    /// Softmax over all nodes of the layer.
    Softmax,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Sigmoid, Activation::Softmax];

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
        }
    }

    fn apply(self, z: &[f64], a: &mut [f64]) {
        match self {
            Activation::Relu => a.iter_mut().zip(z).for_each(|(a, &z)| *a = z.max(0.0)),
            Activation::Sigmoid => a.iter_mut().zip(z).for_each(|(a, &z)| *a = 1.0 / (1.0 + exp(-z))),
            Activation::Softmax => {
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut tot = 0.0;
                for (a, &z) in a.iter_mut().zip(z) {
                    *a = exp(z - m);
                    tot += *a;
                }
                a.iter_mut().for_each(|a| *a /= tot);
            }
        }
    }

    /// Turns `da` (gradient w.r.t. the activations `a`) into the gradient
    /// w.r.t. the pre-activations, in place.
    fn backward(self, z: &[f64], a: &[f64], da: &mut [f64]) {
        match self {
            Activation::Relu => da.iter_mut().zip(z).for_each(|(d, &z)| {
                if z <= 0.0 {
                    *d = 0.0
                }
            }),
            Activation::Sigmoid => da.iter_mut().zip(a).for_each(|(d, &a)| *d *= a * (1.0 - a)),
            Activation::Softmax => {
                let dot: f64 = da.iter().zip(a).map(|(d, a)| d * a).sum();
                da.iter_mut().zip(a).for_each(|(d, &a)| *d = a * (*d - dot));
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: usize,
    pub nodes: usize,
    pub activation: Activation,
    pub dropout: f64,
    pub batch_size: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CannMode {
    /// Output weights pinned at `w_nn = 1, w_in = 1, b = 0`.
    Fixed,
    /// Output weights trained, starting from `(1, 1, 0)`.
    Flexible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cann {
    pub mode: CannMode,
    pub initial: Box<Model>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub validation_share: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Relative drop in validation loss needed to count as an improvement.
    pub min_improvement: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            validation_share: 0.2,
            patience: 20,
            max_epochs: 1000,
            min_improvement: 1e-4,
        }
    }
}

/// How categorical features enter the first hidden layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CategoricalInput {
    OneHot,
    /// A pre-trained encoder, copied into the network and fine-tuned.
    Embedding {
        encoder: Autoencoder,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: usize,
    pub best_epoch: usize,
    pub initial_validation_loss: f64,
    pub best_validation_loss: f64,
    pub validation_losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub family: Family,
    pub spec: NetworkSpec,
    pub features: Vec<Feature>,
    pub scaling: ScalingStats,
    /// Continuous feature indices, in input order.
    pub continuous: Vec<usize>,
    /// Categorical feature indices and their level counts.
    pub categorical: Vec<usize>,
    pub blocks: Vec<usize>,
    /// Code dimension when an encoder is grafted on the categorical block.
    pub embed_dim: Option<usize>,
    pub params: Vec<f64>,
    pub cann: Option<Cann>,
    pub history: TrainingHistory,
    pub repetition: usize,
    pub fold: Option<usize>,
}

/// Offsets into the flat parameter vector.
#[derive(Clone, Debug)]
struct Layout {
    /// `(weights, biases, n_in, n_out)` for the encoder, if any.
    encoder: Option<(usize, usize, usize, usize)>,
    hidden: Vec<(usize, usize, usize, usize)>,
    out_w: usize,
    out_b: usize,
    /// `w_nn, w_in, b`.
    head: Option<usize>,
    total: usize,
}

/// Model inputs of a set of rows after normalisation.
#[derive(Clone, Debug)]
pub struct PreparedRows {
    n_cont: usize,
    n_cat: usize,
    cont: Vec<f64>,
    hot: Vec<usize>,
    /// `ln f_init` for CANN, otherwise zero.
    log_init: Vec<f64>,
    exposure: Vec<f64>,
    response: Vec<f64>,
    weight: Vec<f64>,
}

impl PreparedRows {
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    fn cont(&self, i: usize) -> &[f64] {
        &self.cont[i * self.n_cont..(i + 1) * self.n_cont]
    }

    fn hot(&self, i: usize) -> &[usize] {
        &self.hot[i * self.n_cat..(i + 1) * self.n_cat]
    }
}

/// Per-row forward buffers reused across rows.
struct Workspace {
    input: Vec<f64>,
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    mask: Vec<Vec<f64>>,
    da: Vec<f64>,
    dprev: Vec<f64>,
}

impl Network {
    pub fn kind(&self) -> String {
        match &self.cann {
            None => "ffnn".into(),
            Some(c) => format!(
                "cann_{}_{}",
                c.initial.kind(),
                match c.mode {
                    CannMode::Fixed => "fixed",
                    CannMode::Flexible => "flexible",
                }
            ),
        }
    }

    fn width(&self) -> usize {
        self.blocks.iter().sum()
    }

    fn input_dim(&self) -> usize {
        self.continuous.len() + self.embed_dim.unwrap_or_else(|| self.width())
    }

    fn layout(&self) -> Layout {
        let mut at = 0;
        let encoder = self.embed_dim.map(|d| {
            let w = self.width();
            let l = (at, at + d * w, w, d);
            at += d * w + d;
            l
        });
        let mut hidden = Vec::with_capacity(self.spec.layers);
        let mut n_in = self.input_dim();
        for _ in 0..self.spec.layers {
            let q = self.spec.nodes;
            hidden.push((at, at + q * n_in, n_in, q));
            at += q * n_in + q;
            n_in = q;
        }
        let out_w = at;
        let out_b = at + n_in;
        at = out_b + 1;
        let head = self.cann.as_ref().map(|_| {
            at += 3;
            at - 3
        });
        Layout {
            encoder,
            hidden,
            out_w,
            out_b,
            head,
            total: at,
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Which parameters training may change.
    pub fn trainable(&self) -> Vec<bool> {
        let mut t = vec![true; self.params.len()];
        if let (Some(c), Some(h)) = (&self.cann, self.layout().head) {
            if c.mode == CannMode::Fixed {
                t[h..h + 3].iter_mut().for_each(|v| *v = false);
            }
        }
        t
    }

    /// Output weights `(w_nn, w_in, b)`; `(1, 0, 0)` for a plain network.
    pub fn head(&self) -> (f64, f64, f64) {
        match self.layout().head {
            Some(h) => (self.params[h], self.params[h + 1], self.params[h + 2]),
            None => (1.0, 0.0, 0.0),
        }
    }

    fn workspace(&self) -> Workspace {
        let l = self.layout();
        Workspace {
            input: vec![0.0; self.input_dim()],
            z: l.hidden.iter().map(|h| vec![0.0; h.3]).collect(),
            a: l.hidden.iter().map(|h| vec![0.0; h.3]).collect(),
            mask: l.hidden.iter().map(|h| vec![1.0; h.3]).collect(),
            da: vec![0.0; self.spec.nodes.max(self.input_dim())],
            dprev: vec![0.0; self.spec.nodes.max(self.input_dim())],
        }
    }

    /// Normalises, encodes and attaches initial-model offsets for all rows.
    pub fn prepare(&self, data: &Dataset) -> Result<PreparedRows> {
        let n = data.n_rows();
        let mut offsets = Vec::with_capacity(self.blocks.len());
        let mut acc = 0;
        for &b in &self.blocks {
            offsets.push(acc);
            acc += b;
        }
        let mut cont = Vec::with_capacity(n * self.continuous.len());
        let mut hot = Vec::with_capacity(n * self.categorical.len());
        let mut log_init = vec![0.0; n];
        let mut raw = vec![0.0; data.n_features()];
        for i in 0..n {
            data.row_into(i, &mut raw);
            let mut scaled = raw.clone();
            self.scaling.apply_row(&mut scaled);
            cont.extend(self.continuous.iter().map(|&j| scaled[j]));
            for (k, &j) in self.categorical.iter().enumerate() {
                let level = raw[j];
                if !(level >= 0.0 && (level as usize) < self.blocks[k]) {
                    return Err(Error::Row {
                        row: i,
                        message: format!("unknown level {level} of `{}`", self.features[j].name),
                    });
                }
                hot.push(offsets[k] + level as usize);
            }
            if let Some(c) = &self.cann {
                let f = c.initial.predict_row(&raw)?;
                if !(f > 0.0) {
                    return Err(Error::NonPositive {
                        what: "initial model prediction",
                        index: i,
                        value: f,
                    });
                }
                log_init[i] = ln(f);
            }
        }
        Ok(PreparedRows {
            n_cont: self.continuous.len(),
            n_cat: self.categorical.len(),
            cont,
            hot,
            log_init,
            exposure: data.exposure().to_vec(),
            response: data.response().to_vec(),
            weight: data.weight().to_vec(),
        })
    }

    /// Network adjustment `s(x)` and the total log prediction. When `rng` is
    /// given, inverted dropout is applied to every hidden layer.
    fn forward(
        &self,
        params: &[f64],
        l: &Layout,
        cont: &[f64],
        hot: &[usize],
        log_init: f64,
        ws: &mut Workspace,
        mut rng: Option<&mut Rng>,
    ) -> (f64, f64) {
        let nc = cont.len();
        ws.input[..nc].copy_from_slice(cont);
        match l.encoder {
            Some((w, b, n_in, d)) => {
                for k in 0..d {
                    let mut s = params[b + k];
                    for &h in hot {
                        s += params[w + k * n_in + h];
                    }
                    ws.input[nc + k] = s;
                }
            }
            None => {
                ws.input[nc..].iter_mut().for_each(|v| *v = 0.0);
                for &h in hot {
                    ws.input[nc + h] = 1.0;
                }
            }
        }
        let p = self.spec.dropout;
        for (m, &(w, b, n_in, n_out)) in l.hidden.iter().enumerate() {
            let (before, after) = ws.a.split_at_mut(m);
            let prev: &[f64] = if m == 0 { &ws.input } else { &before[m - 1] };
            let z = &mut ws.z[m];
            for r in 0..n_out {
                let row = &params[w + r * n_in..w + (r + 1) * n_in];
                z[r] = params[b + r] + row.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
            }
            let a = &mut after[0];
            self.spec.activation.apply(z, a);
            if let Some(rng) = rng.as_deref_mut() {
                if p > 0.0 {
                    for (a, mask) in a.iter_mut().zip(ws.mask[m].iter_mut()) {
                        *mask = if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) };
                        *a *= *mask;
                    }
                }
            }
        }
        let last: &[f64] = match ws.a.last() {
            Some(a) => a,
            None => &ws.input,
        };
        let n_last = last.len();
        let s = params[l.out_b]
            + params[l.out_w..l.out_w + n_last]
                .iter()
                .zip(last)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        let total = match l.head {
            Some(h) => params[h] * s + params[h + 1] * log_init + params[h + 2],
            None => s,
        };
        (s, total)
    }

    /// Accumulates `g * d(total)/d(params)` into `grad` after a forward pass.
    fn backward(
        &self,
        params: &[f64],
        l: &Layout,
        hot: &[usize],
        log_init: f64,
        s: f64,
        g: f64,
        ws: &mut Workspace,
        grad: &mut [f64],
    ) {
        let ds = match l.head {
            Some(h) => {
                grad[h] += g * s;
                grad[h + 1] += g * log_init;
                grad[h + 2] += g;
                g * params[h]
            }
            None => g,
        };
        let n_last = if l.hidden.is_empty() {
            ws.input.len()
        } else {
            self.spec.nodes
        };
        grad[l.out_b] += ds;
        {
            let last: &[f64] = match ws.a.last() {
                Some(a) => a,
                None => &ws.input,
            };
            for k in 0..n_last {
                grad[l.out_w + k] += ds * last[k];
                ws.da[k] = ds * params[l.out_w + k];
            }
        }
        for m in (0..l.hidden.len()).rev() {
            let (w, b, n_in, n_out) = l.hidden[m];
            let da = &mut ws.da[..n_out];
            if self.spec.dropout > 0.0 {
                da.iter_mut().zip(&ws.mask[m]).for_each(|(d, k)| *d *= k);
            }
            // The activation Jacobian uses the pre-dropout activations.
            let a_pre: Vec<f64> = if self.spec.dropout > 0.0 && self.spec.activation != Activation::Relu {
                let mut a = vec![0.0; n_out];
                self.spec.activation.apply(&ws.z[m], &mut a);
                a
            } else {
                ws.a[m].clone()
            };
            self.spec.activation.backward(&ws.z[m], &a_pre, da);
            let prev: &[f64] = if m == 0 { &ws.input } else { &ws.a[m - 1] };
            let dprev = &mut ws.dprev[..n_in];
            dprev.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..n_out {
                let dr = da[r];
                if dr == 0.0 {
                    continue;
                }
                grad[b + r] += dr;
                let wrow = &params[w + r * n_in..w + (r + 1) * n_in];
                let grow = &mut grad[w + r * n_in..w + (r + 1) * n_in];
                for k in 0..n_in {
                    grow[k] += dr * prev[k];
                    dprev[k] += dr * wrow[k];
                }
            }
            core::mem::swap(&mut ws.da, &mut ws.dprev);
        }
        if let Some((w, b, n_in, d)) = l.encoder {
            let nc = self.continuous.len();
            for k in 0..d {
                let dk = ws.da[nc + k];
                grad[b + k] += dk;
                for &h in hot {
                    grad[w + k * n_in + h] += dk;
                }
            }
        }
    }

    fn unit_loss(&self, total: f64, i: usize, rows: &PreparedRows) -> (f64, f64) {
        let mu = exp(total);
        let y = rows.response[i];
        match self.family {
            Family::PoissonLog => {
                let m = rows.exposure[i] * mu;
                (2.0 * (ylogy_over(y, m) - (y - m)), 2.0 * (m - y))
            }
            Family::GammaLog => {
                let a = rows.weight[i];
                (2.0 * a * ((y - mu) / mu - ln(y / mu)), 2.0 * a * (1.0 - y / mu))
            }
        }
    }

    /// Mean unit deviance over `subset` of `rows` and its gradient with
    /// respect to `params`, without dropout.
    pub fn loss_and_gradient(&self, params: &[f64], rows: &PreparedRows, subset: &[usize]) -> (f64, Vec<f64>) {
        let l = self.layout();
        let mut ws = self.workspace();
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for &i in subset {
            let (s, total) = self.forward(params, &l, rows.cont(i), rows.hot(i), rows.log_init[i], &mut ws, None);
            let (li, gi) = self.unit_loss(total, i, rows);
            loss += li;
            self.backward(params, &l, rows.hot(i), rows.log_init[i], s, gi, &mut ws, &mut grad);
        }
        let k = 1.0 / subset.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= k);
        (loss * k, grad)
    }

    /// Mean unit deviance of the current parameters on `subset`.
    pub fn loss_on(&self, params: &[f64], rows: &PreparedRows, subset: &[usize]) -> f64 {
        let l = self.layout();
        let mut ws = self.workspace();
        let mut loss = 0.0;
        for &i in subset {
            let (_, total) = self.forward(params, &l, rows.cont(i), rows.hot(i), rows.log_init[i], &mut ws, None);
            loss += self.unit_loss(total, i, rows).0;
        }
        loss / subset.len().max(1) as f64
    }

    /// Predictions (without exposure) for prepared rows.
    pub fn predict_prepared(&self, rows: &PreparedRows) -> Result<Vec<f64>> {
        let l = self.layout();
        let mut ws = self.workspace();
        (0..rows.len())
            .map(|i| {
                let (_, total) = self.forward(
                    &self.params,
                    &l,
                    rows.cont(i),
                    rows.hot(i),
                    rows.log_init[i],
                    &mut ws,
                    None,
                );
                let f = exp(total);
                if !f.is_finite() || f <= 0.0 {
                    return Err(Error::NonFinite {
                        layer: self.spec.layers + 1,
                    });
                }
                Ok(f)
            })
            .collect()
    }

    /// Prediction for one raw feature row.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        let mut scaled = row.to_vec();
        self.scaling.apply_row(&mut scaled);
        let cont: Vec<f64> = self.continuous.iter().map(|&j| scaled[j]).collect();
        let mut hot = Vec::with_capacity(self.categorical.len());
        let mut off = 0;
        for (k, &j) in self.categorical.iter().enumerate() {
            let level = row[j];
            if !(level >= 0.0 && (level as usize) < self.blocks[k]) {
                return Err(Error::InvalidInput(format!(
                    "unknown level {level} of `{}`",
                    self.features[j].name
                )));
            }
            hot.push(off + level as usize);
            off += self.blocks[k];
        }
        let log_init = match &self.cann {
            Some(c) => {
                let f = c.initial.predict_row(row)?;
                if !(f > 0.0) {
                    return Err(Error::NonPositive {
                        what: "initial model prediction",
                        index: 0,
                        value: f,
                    });
                }
                ln(f)
            }
            None => 0.0,
        };
        let l = self.layout();
        let mut ws = self.workspace();
        let (_, total) = self.forward(&self.params, &l, &cont, &hot, log_init, &mut ws, None);
        if let Some(m) = ws.a.iter().position(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite { layer: m + 1 });
        }
        let f = exp(total);
        if !f.is_finite() || f <= 0.0 {
            return Err(Error::NonFinite {
                layer: self.spec.layers + 1,
            });
        }
        Ok(f)
    }
}

impl Predictor for Network {
    fn predict_row(&self, row: &[f64]) -> Result<f64> {
        Network::predict_row(self, row)
    }

    fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.predict_prepared(&self.prepare(data)?)
    }
}

/// Builds an untrained network for `data` with Glorot-initialised hidden
/// layers. A plain network starts at the portfolio mean; a CANN starts at
/// its initial model (zero adjustment layer, output weights `(1, 1, 0)`).
pub fn init_network(
    data: &Dataset,
    spec: &NetworkSpec,
    input: &CategoricalInput,
    cann: Option<Cann>,
    repetition: usize,
) -> Result<Network> {
    if spec.layers == 0 || spec.nodes == 0 {
        return Err(Error::InvalidInput(
            "a network needs at least one hidden layer and node".into(),
        ));
    }
    if !(0.0..1.0).contains(&spec.dropout) {
        return Err(Error::InvalidInput(format!("dropout {} outside [0, 1)", spec.dropout)));
    }
    let features = data.features().to_vec();
    let continuous: Vec<usize> = (0..features.len()).filter(|&j| !features[j].is_categorical()).collect();
    let categorical: Vec<usize> = (0..features.len()).filter(|&j| features[j].is_categorical()).collect();
    let blocks: Vec<usize> = categorical.iter().map(|&j| features[j].n_levels()).collect();
    let embed_dim = match input {
        CategoricalInput::OneHot => None,
        CategoricalInput::Embedding { encoder } => {
            if encoder.blocks != blocks {
                return Err(Error::InvalidInput(format!(
                    "encoder blocks {:?} do not match the categorical levels {:?}",
                    encoder.blocks, blocks
                )));
            }
            Some(encoder.dim)
        }
    };
    let scaling = ScalingStats::compute_all(data)?;
    let mut net = Network {
        family: Family::for_target(data.target()),
        spec: *spec,
        features,
        scaling,
        continuous,
        categorical,
        blocks,
        embed_dim,
        params: Vec::new(),
        cann,
        history: TrainingHistory::default(),
        repetition,
        fold: None,
    };
    let l = net.layout();
    let mut params = vec![0.0; l.total];
    let mut rng = rng::stream(spec.seed, "network-init", repetition as u64);
    if let (Some((w, b, _, _)), CategoricalInput::Embedding { encoder }) = (l.encoder, input) {
        params[w..w + encoder.w_enc.len()].copy_from_slice(&encoder.w_enc);
        params[b..b + encoder.b_enc.len()].copy_from_slice(&encoder.b_enc);
    }
    for &(w, _, n_in, n_out) in &l.hidden {
        params[w..w + n_in * n_out].copy_from_slice(&glorot(&mut rng, n_in, n_out, n_in * n_out));
    }
    let n_last = l.out_b - l.out_w;
    match l.head {
        Some(h) => {
            params[h] = 1.0;
            params[h + 1] = 1.0;
        }
        None => {
            params[l.out_w..l.out_b].copy_from_slice(&glorot(&mut rng, n_last, 1, n_last));
            params[l.out_b] = ln(data.weighted_mean_response());
        }
    }
    net.params = params;
    Ok(net)
}

fn deviance_of(family: Family, rows: &PreparedRows, subset: &[usize], preds: &[f64]) -> Result<f64> {
    let pick = |v: &[f64]| subset.iter().map(|&i| v[i]).collect::<Vec<_>>();
    match family {
        Family::PoissonLog => poisson_deviance(preds, &pick(&rows.response), &pick(&rows.exposure)),
        Family::GammaLog => gamma_deviance(preds, &pick(&rows.response), &pick(&rows.weight)),
    }
}

/// Trains `net` in place on `data` with mini-batch Adam, holding out a
/// random validation share for early stopping and restoring the best weights.
pub fn fit_network(net: &mut Network, data: &Dataset, config: &TrainConfig) -> Result<()> {
    let rows = net.prepare(data)?;
    let n = rows.len();
    if n < 2 {
        return Err(Error::Empty("network training rows"));
    }
    let mut rng = rng::stream(net.spec.seed, "network-train", net.repetition as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((config.validation_share * n as f64) as usize).clamp(1, n - 1);
    let (val, train) = order.split_at(n_val);
    let (val, mut train) = (val.to_vec(), train.to_vec());
    let trainable = net.trainable();
    let l = net.layout();
    let mut ws = net.workspace();
    let mut params = net.params.clone();
    let mut grad = vec![0.0; params.len()];
    let mut adam = Adam::new(config.adam, params.len());
    let initial = net.loss_on(&params, &rows, &val);
    let mut history = TrainingHistory {
        initial_validation_loss: initial,
        best_validation_loss: initial,
        ..Default::default()
    };
    let mut best = params.clone();
    let mut since_best = 0;
    for epoch in 0..config.max_epochs {
        history.epochs = epoch + 1;
        train.shuffle(&mut rng);
        for batch in train.chunks(net.spec.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let (s, total) = net.forward(
                    &params,
                    &l,
                    rows.cont(i),
                    rows.hot(i),
                    rows.log_init[i],
                    &mut ws,
                    Some(&mut rng),
                );
                let (_, gi) = net.unit_loss(total, i, &rows);
                net.backward(&params, &l, rows.hot(i), rows.log_init[i], s, gi, &mut ws, &mut grad);
            }
            let k = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= k);
            adam.step(&mut params, &grad, Some(&trainable));
        }
        let v = net.loss_on(&params, &rows, &val);
        if !v.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.validation_losses.push(v);
        if v < history.best_validation_loss - config.min_improvement * history.best_validation_loss.abs() {
            history.best_validation_loss = v;
            history.best_epoch = epoch + 1;
            best.copy_from_slice(&params);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    net.params = best;
    net.history = history;
    Ok(())
}

/// [`init_network`] followed by [`fit_network`].
pub fn train_network(
    data: &Dataset,
    spec: &NetworkSpec,
    input: &CategoricalInput,
    cann: Option<Cann>,
    config: &TrainConfig,
    repetition: usize,
) -> Result<Network> {
    let mut net = init_network(data, spec, input, cann, repetition)?;
    fit_network(&mut net, data, config)?;
    Ok(net)
}

/// Out-of-sample deviance of a trained network on `data`.
pub fn network_deviance(net: &Network, data: &Dataset) -> Result<f64> {
    let rows = net.prepare(data)?;
    let preds = net.predict_prepared(&rows)?;
    let all: Vec<usize> = (0..rows.len()).collect();
    deviance_of(net.family, &rows, &all, &preds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub activations: Vec<Activation>,
    pub batch_size: (usize, usize),
    pub layers: (usize, usize),
    pub nodes: (usize, usize),
    pub dropout: (f64, f64),
}

impl SearchSpace {
    /// Full search ranges for frequency networks.
    pub fn frequency() -> Self {
        Self {
            activations: Activation::ALL.to_vec(),
            batch_size: (10_000, 50_000),
            layers: (1, 4),
            nodes: (10, 50),
            dropout: (0.0, 0.1),
        }
    }

    /// Full search ranges for severity networks.
    pub fn severity() -> Self {
        Self {
            batch_size: (200, 10_000),
            ..Self::frequency()
        }
    }

    /// Smaller batches and networks for a laptop run.
    pub fn desk_frequency() -> Self {
        Self {
            batch_size: (1_000, 5_000),
            layers: (1, 2),
            nodes: (10, 30),
            ..Self::frequency()
        }
    }

    pub fn desk_severity() -> Self {
        Self {
            batch_size: (100, 1_000),
            ..Self::desk_frequency()
        }
    }

    pub fn contains(&self, spec: &NetworkSpec) -> bool {
        self.activations.contains(&spec.activation)
            && (self.batch_size.0..=self.batch_size.1).contains(&spec.batch_size)
            && (self.layers.0..=self.layers.1).contains(&spec.layers)
            && (self.nodes.0..=self.nodes.1).contains(&spec.nodes)
            && spec.dropout >= self.dropout.0
            && spec.dropout <= self.dropout.1
    }
}

fn draw_int(rng: &mut Rng, (lo, hi): (usize, usize)) -> usize {
    let x: f64 = rng.random_range(lo as f64..=hi as f64);
    (floor(x + 0.5) as usize).clamp(lo, hi)
}

/// `n` independent uniform draws from the search space.
pub fn random_grid(space: &SearchSpace, n: usize, seed: u64) -> Result<Vec<NetworkSpec>> {
    if space.activations.is_empty() {
        return Err(Error::Empty("activation choices"));
    }
    let mut rng = rng::stream(seed, "random-grid", 0);
    Ok((0..n)
        .map(|k| {
            let activation = space.activations[rng.random_range(0..space.activations.len())];
            NetworkSpec {
                activation,
                batch_size: draw_int(&mut rng, space.batch_size),
                layers: draw_int(&mut rng, space.layers),
                nodes: draw_int(&mut rng, space.nodes),
                dropout: rng.random_range(space.dropout.0..=space.dropout.1),
                seed: rng::derive_seed(seed, "grid-point", k as u64),
            }
        })
        .collect())
}

/// Fits the CANN initial model on a training subset.
pub type InitialFit<'a> = &'a dyn Fn(&Dataset) -> Result<Model>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecScore {
    pub spec: NetworkSpec,
    pub deviance: f64,
}

/// Scores every grid point by inner cross-validation on the training rows of
/// outer fold `outer`. `initial` fits the CANN initial model on a given
/// training set; `None` tunes a plain network.
pub fn tune_network(
    data: &Dataset,
    plan: &FoldPlan,
    outer: usize,
    grid: &[NetworkSpec],
    input: &CategoricalInput,
    mode: Option<CannMode>,
    initial: Option<InitialFit<'_>>,
    config: &TrainConfig,
) -> Result<(NetworkSpec, Vec<SpecScore>)> {
    if grid.is_empty() {
        return Err(Error::Empty("network grid"));
    }
    let inner = plan.inner_folds(outer);
    let mut prepared = Vec::with_capacity(inner.len());
    for (_, train, valid) in &inner {
        let (tr, va) = (data.subset(train), data.subset(valid));
        let cann = match (mode, initial) {
            (Some(mode), Some(fit)) => Some(Cann {
                mode,
                initial: Box::new(fit(&tr)?),
            }),
            (None, None) => None,
            _ => return Err(Error::InvalidInput("CANN mode and initial model go together".into())),
        };
        prepared.push((tr, va, cann));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for spec in grid {
        let mut total = 0.0;
        for (tr, va, cann) in &prepared {
            let net = train_network(tr, spec, input, cann.clone(), config, 0)?;
            total += network_deviance(&net, va)?;
        }
        scores.push(SpecScore {
            spec: *spec,
            deviance: total / prepared.len() as f64,
        });
    }
    let best = scores
        .iter()
        .min_by(|a, b| a.deviance.total_cmp(&b.deviance))
        .map(|s| s.spec)
        .ok_or(Error::Empty("network grid"))?;
    Ok((best, scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(activation: Activation) -> NetworkSpec {
        NetworkSpec {
            layers: 1,
            nodes: 3,
            activation,
            dropout: 0.0,
            batch_size: 10,
            seed: 1,
        }
    }

    fn toy() -> Dataset {
        Dataset::frequency(
            vec![Feature::continuous("x"), Feature::categorical("c", &["a", "b"])],
            vec![vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0, 1.0]],
            vec![1.0; 4],
            vec![0.0, 1.0, 0.0, 2.0],
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_predict_one() {
        let mut net = init_network(&toy(), &spec(Activation::Relu), &CategoricalInput::OneHot, None, 0).unwrap();
        net.params.iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(net.predict_row(&[1.5, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn activations_match_definitions() {
        let z = [0.0, ln(2.0), -1.0];
        let mut a = [0.0; 3];
        Activation::Relu.apply(&z, &mut a);
        assert_eq!(a, [0.0, ln(2.0), 0.0]);
        Activation::Softmax.apply(&z[..2], &mut a[..2]);
        assert!((a[0] - 1.0 / 3.0).abs() < 1e-15);
        Activation::Sigmoid.apply(&[0.0], &mut a[..1]);
        assert_eq!(a[0], 0.5);
    }

    #[test]
    fn grid_is_deterministic_and_in_bounds() {
        let space = SearchSpace::frequency();
        let g = random_grid(&space, 40, 3).unwrap();
        assert_eq!(g, random_grid(&space, 40, 3).unwrap());
        assert!(g.iter().all(|s| space.contains(s)));
    }

    #[test]
    fn unknown_level_is_rejected() {
        let net = init_network(&toy(), &spec(Activation::Sigmoid), &CategoricalInput::OneHot, None, 0).unwrap();
        assert!(net.predict_row(&[0.0, 2.0]).is_err());
    }
}
