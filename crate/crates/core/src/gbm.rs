//! Gradient boosting with regression trees for Poisson (exposure offset) and
//! gamma (claim-count weights) responses on the log scale.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Feature, FoldPlan};
use crate::error::{Error, Result};
use crate::evaluation::{gamma_deviance, poisson_deviance};
use crate::glm::Family;
use crate::math::{ceil, exp, ln};
use crate::rng;

const MAX_BINS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub n_trees: usize,
    pub depth: usize,
    pub shrinkage: f64,
    pub bag_fraction: f64,
    /// Minimum rows per node as a share of the training rows.
    pub min_node_share: f64,
    pub seed: u64,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            depth: 2,
            shrinkage: 0.01,
            bag_fraction: 0.75,
            min_node_share: 0.0075,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// `x <= threshold` goes left.
    Numeric {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Levels flagged in `goes_left` go left; unknown levels follow `default_left`.
    Categorical {
        feature: usize,
        goes_left: Vec<bool>,
        default_left: bool,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { value } => return *value,
                Node::Numeric {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[*feature] <= *threshold { *left } else { *right },
                Node::Categorical {
                    feature,
                    goes_left,
                    default_left,
                    left,
                    right,
                } => {
                    let x = row[*feature];
                    let l = if x >= 0.0 && (x as usize) < goes_left.len() {
                        goes_left[x as usize]
                    } else {
                        *default_left
                    };
                    k = if l { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, k: usize) -> usize {
            match &t.nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Numeric { left, right, .. } | Node::Categorical { left, right, .. } => {
                    1 + go(t, *left).max(go(t, *right))
                }
            }
        }
        go(self, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub family: Family,
    pub features: Vec<Feature>,
    /// Constant initial score on the log scale.
    pub init: f64,
    pub shrinkage: f64,
    pub trees: Vec<Tree>,
    pub params: GbmParams,
    pub fold: Option<usize>,
}

impl GbmModel {
    /// Log-scale score after the first `stages` trees.
    pub fn score_row(&self, row: &[f64], stages: usize) -> f64 {
        self.init
            + self.shrinkage
                * self.trees[..stages.min(self.trees.len())]
                    .iter()
                    .map(|t| t.predict(row))
                    .sum::<f64>()
    }

    /// Rate per unit exposure (frequency) or expected amount (severity).
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        exp(self.score_row(row, self.trees.len()))
    }

    pub fn predict(&self, data: &Dataset) -> Vec<f64> {
        let mut buf = vec![0.0; data.n_features()];
        (0..data.n_rows())
            .map(|i| {
                data.row_into(i, &mut buf);
                self.predict_row(&buf)
            })
            .collect()
    }

    /// Predictions after each of `stages` tree counts, in one pass.
    pub fn predict_staged(&self, data: &Dataset, stages: &[usize]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(data.n_rows()); stages.len()];
        let mut buf = vec![0.0; data.n_features()];
        for i in 0..data.n_rows() {
            data.row_into(i, &mut buf);
            let mut score = self.init;
            let mut done = 0;
            let mut order: Vec<usize> = (0..stages.len()).collect();
            order.sort_by_key(|&s| stages[s]);
            for &s in &order {
                let upto = stages[s].min(self.trees.len());
                while done < upto {
                    score += self.shrinkage * self.trees[done].predict(&buf);
                    done += 1;
                }
                out[s].push(exp(score));
            }
        }
        out
    }

    /// Copy keeping only the first `n` trees.
    pub fn truncated(&self, n: usize) -> GbmModel {
        let mut m = self.clone();
        m.trees.truncate(n);
        m.params.n_trees = m.trees.len();
        m
    }
}

/// Per-feature binning of the training values.
enum Binned {
    /// Thresholds `t_k`; bin of x is the number of thresholds below x.
    Numeric {
        thresholds: Vec<f64>,
        codes: Vec<u16>,
    },
    Categorical {
        n_levels: usize,
        codes: Vec<u16>,
    },
}

impl Binned {
    fn codes(&self) -> &[u16] {
        match self {
            Binned::Numeric { codes, .. } | Binned::Categorical { codes, .. } => codes,
        }
    }
    fn n_bins(&self) -> usize {
        match self {
            Binned::Numeric { thresholds, .. } => thresholds.len() + 1,
            Binned::Categorical { n_levels, .. } => *n_levels,
        }
    }
}

fn bin_numeric(values: &[f64]) -> Binned {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let thresholds: Vec<f64> = if distinct.len() <= MAX_BINS {
        distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    } else {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut t: Vec<f64> = (1..MAX_BINS)
            .filter_map(|k| {
                let pos = k * n / MAX_BINS;
                let v = sorted[pos.min(n - 1)];
                // next distinct value above v
                let idx = distinct.partition_point(|&d| d <= v);
                (idx < distinct.len()).then(|| 0.5 * (v + distinct[idx]))
            })
            .collect();
        t.dedup();
        t
    };
    let codes = values
        .iter()
        .map(|&x| thresholds.partition_point(|&t| t < x) as u16)
        .collect();
    Binned::Numeric { thresholds, codes }
}

struct SplitChoice {
    gain: f64,
    feature: usize,
    /// Numeric: bins `<= cut` go left. Categorical: per-bin left flags.
    cut: usize,
    left_bins: Vec<bool>,
}

struct Grower<'a> {
    bins: &'a [Binned],
    grad: &'a [f64],
    hess: &'a [f64],
    min_node: usize,
}

impl Grower<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let (g, h) = rows
            .iter()
            .fold((0.0, 0.0), |(g, h), &i| (g + self.grad[i], h + self.hess[i]));
        if h > 0.0 {
            g / h
        } else {
            0.0
        }
    }

    fn best_split(&self, rows: &[usize]) -> Option<SplitChoice> {
        let n = rows.len();
        if n < 2 * self.min_node {
            return None;
        }
        let total: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<SplitChoice> = None;
        let mut sum = vec![0.0; MAX_BINS.max(1)];
        let mut cnt = vec![0usize; MAX_BINS.max(1)];
        for (j, b) in self.bins.iter().enumerate() {
            let nb = b.n_bins();
            if nb < 2 {
                continue;
            }
            if sum.len() < nb {
                sum.resize(nb, 0.0);
                cnt.resize(nb, 0);
            }
            sum[..nb].iter_mut().for_each(|v| *v = 0.0);
            cnt[..nb].iter_mut().for_each(|v| *v = 0);
            let codes = b.codes();
            for &i in rows {
                let c = codes[i] as usize;
                sum[c] += self.grad[i];
                cnt[c] += 1;
            }
            let order: Vec<usize> = match b {
                Binned::Numeric { .. } => (0..nb).collect(),
                Binned::Categorical { .. } => {
                    let mut present: Vec<usize> = (0..nb).filter(|&c| cnt[c] > 0).collect();
                    present.sort_by(|&a, &c| (sum[a] / cnt[a] as f64).total_cmp(&(sum[c] / cnt[c] as f64)));
                    present
                }
            };
            let (mut sl, mut nl) = (0.0, 0usize);
            for (pos, &c) in order.iter().enumerate().take(order.len().saturating_sub(1)) {
                sl += sum[c];
                nl += cnt[c];
                let nr = n - nl;
                if nl < self.min_node || nr < self.min_node || cnt[c] == 0 {
                    continue;
                }
                let sr = total - sl;
                let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
                if gain > 1e-12 * parent.abs().max(1e-300) && best.as_ref().is_none_or(|s| gain > s.gain) {
                    let left_bins = match b {
                        Binned::Numeric { .. } => Vec::new(),
                        Binned::Categorical { .. } => {
                            let mut l = vec![false; nb];
                            for &cc in &order[..=pos] {
                                l[cc] = true;
                            }
                            l
                        }
                    };
                    best = Some(SplitChoice {
                        gain,
                        feature: j,
                        cut: c,
                        left_bins,
                    });
                }
            }
        }
        best
    }

    fn grow(&self, rows: Vec<usize>, depth: usize) -> Tree {
        let mut nodes = Vec::new();
        self.grow_node(&mut nodes, rows, depth);
        Tree { nodes }
    }

    fn grow_node(&self, nodes: &mut Vec<Node>, rows: Vec<usize>, depth: usize) -> usize {
        let me = nodes.len();
        nodes.push(Node::Leaf {
            value: self.leaf_value(&rows),
        });
        if depth == 0 {
            return me;
        }
        let Some(split) = self.best_split(&rows) else {
            return me;
        };
        let codes = self.bins[split.feature].codes();
        let goes_left = |i: usize| -> bool {
            let c = codes[i] as usize;
            if split.left_bins.is_empty() {
                c <= split.cut
            } else {
                split.left_bins[c]
            }
        };
        let (lrows, rrows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| goes_left(i));
        let node = match &self.bins[split.feature] {
            Binned::Numeric { thresholds, .. } => Node::Numeric {
                feature: split.feature,
                threshold: thresholds[split.cut],
                left: 0,
                right: 0,
            },
            Binned::Categorical { .. } => {
                // Levels absent from the node go with the larger child.
                let default_left = lrows.len() >= rrows.len();
                let mut mask = split.left_bins.clone();
                let present = {
                    let mut p = vec![false; mask.len()];
                    for &i in &rows {
                        p[codes[i] as usize] = true;
                    }
                    p
                };
                for (m, &p) in mask.iter_mut().zip(&present) {
                    if !p {
                        *m = default_left;
                    }
                }
                Node::Categorical {
                    feature: split.feature,
                    goes_left: mask,
                    default_left,
                    left: 0,
                    right: 0,
                }
            }
        };
        nodes[me] = node;
        let l = self.grow_node(nodes, lrows, depth - 1);
        let r = self.grow_node(nodes, rrows, depth - 1);
        match &mut nodes[me] {
            Node::Numeric { left, right, .. } | Node::Categorical { left, right, .. } => {
                *left = l;
                *right = r;
            }
            Node::Leaf { .. } => unreachable!(),
        }
        me
    }
}

/// Fits a boosted tree ensemble on all rows of `data`.
pub fn fit_gbm(data: &Dataset, params: &GbmParams) -> Result<GbmModel> {
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::Empty("training data"));
    }
    if params.depth == 0 {
        return Err(Error::InvalidInput("tree depth must be at least 1".into()));
    }
    if !(params.bag_fraction > 0.0 && params.bag_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "bag fraction {} outside (0, 1]",
            params.bag_fraction
        )));
    }
    let family = Family::for_target(data.target());
    let y = data.response();
    let (offset, prior): (Vec<f64>, &[f64]) = match family {
        Family::PoissonLog => (data.exposure().iter().map(|&e| ln(e)).collect(), &[]),
        Family::GammaLog => (vec![0.0; n], data.weight()),
    };
    let init = ln(data.weighted_mean_response());
    if !init.is_finite() {
        return Err(Error::InvalidInput(
            "the portfolio mean response must be positive".into(),
        ));
    }
    let bins: Vec<Binned> = data
        .features()
        .iter()
        .enumerate()
        .map(|(j, f)| {
            if f.is_categorical() {
                Binned::Categorical {
                    n_levels: f.n_levels(),
                    codes: data.column(j).iter().map(|&x| x as u16).collect(),
                }
            } else {
                bin_numeric(data.column(j))
            }
        })
        .collect();
    let bag = ((params.bag_fraction * n as f64) as usize).clamp(1, n);
    let min_node = (ceil(params.min_node_share * n as f64) as usize).max(1);
    let mut score = vec![init; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        for i in 0..n {
            let mu = exp(offset[i] + score[i]);
            match family {
                Family::PoissonLog => {
                    grad[i] = y[i] - mu;
                    hess[i] = mu;
                }
                Family::GammaLog => {
                    grad[i] = prior[i] * (y[i] / mu - 1.0);
                    hess[i] = prior[i];
                }
            }
        }
        let mut rows: Vec<usize> = if bag == n {
            (0..n).collect()
        } else {
            let mut r = rng::stream(params.seed, "gbm-bag", t as u64);
            sample(&mut r, n, bag).into_vec()
        };
        rows.sort_unstable();
        let grower = Grower {
            bins: &bins,
            grad: &grad,
            hess: &hess,
            min_node,
        };
        let tree = grower.grow(rows, params.depth);
        let mut buf = vec![0.0; data.n_features()];
        for (i, s) in score.iter_mut().enumerate() {
            data.row_into(i, &mut buf);
            *s += params.shrinkage * tree.predict(&buf);
        }
        if score.iter().any(|s| !s.is_finite()) {
            return Err(Error::Diverged { epoch: t });
        }
        trees.push(tree);
    }
    Ok(GbmModel {
        family,
        features: data.features().to_vec(),
        init,
        shrinkage: params.shrinkage,
        trees,
        params: *params,
        fold: None,
    })
}

/// Deviance of `predictions` against the responses of `data`.
pub fn deviance_on(data: &Dataset, predictions: &[f64]) -> Result<f64> {
    match Family::for_target(data.target()) {
        Family::PoissonLog => poisson_deviance(predictions, data.response(), data.exposure()),
        Family::GammaLog => gamma_deviance(predictions, data.response(), data.weight()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmGrid {
    pub n_trees: Vec<usize>,
    pub depth: Vec<usize>,
}

impl GbmGrid {
    /// The full-size grid.
    pub fn paper() -> Self {
        Self {
            n_trees: (0..25).map(|k| 100 + 200 * k).collect(),
            depth: (1..=10).collect(),
        }
    }

    /// A grid small enough for a laptop run.
    pub fn desk() -> Self {
        Self {
            n_trees: vec![50, 100, 200, 400],
            depth: (1..=5).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub n_trees: usize,
    pub depth: usize,
    /// Mean validation deviance over the inner folds.
    pub deviance: f64,
}

/// Picks `(n_trees, depth)` by inner cross-validation on the training rows
/// of outer fold `outer`. Each depth is fitted once per inner fold with the
/// largest tree count and scored at every count via staged predictions.
pub fn tune_gbm(
    data: &Dataset,
    plan: &FoldPlan,
    outer: usize,
    grid: &GbmGrid,
    base: &GbmParams,
) -> Result<(GbmParams, Vec<GridScore>)> {
    if grid.n_trees.is_empty() || grid.depth.is_empty() {
        return Err(Error::Empty("hyperparameter grid"));
    }
    let max_trees = *grid.n_trees.iter().max().unwrap_or(&1);
    let mut scores = Vec::new();
    for &depth in &grid.depth {
        let mut totals = vec![0.0; grid.n_trees.len()];
        let inner = plan.inner_folds(outer);
        for (v, train, valid) in &inner {
            let params = GbmParams {
                n_trees: max_trees,
                depth,
                seed: rng::derive_seed(base.seed, "gbm-inner", (outer * 64 + v) as u64),
                ..*base
            };
            let model = fit_gbm(&data.subset(train), &params)?;
            let vdata = data.subset(valid);
            for (s, preds) in model.predict_staged(&vdata, &grid.n_trees).iter().enumerate() {
                totals[s] += deviance_on(&vdata, preds)?;
            }
        }
        for (s, &nt) in grid.n_trees.iter().enumerate() {
            scores.push(GridScore {
                n_trees: nt,
                depth,
                deviance: totals[s] / inner.len() as f64,
            });
        }
    }
    let best = scores
        .iter()
        .min_by(|a, b| a.deviance.total_cmp(&b.deviance))
        .ok_or(Error::Empty("grid scores"))?;
    Ok((
        GbmParams {
            n_trees: best.n_trees,
            depth: best.depth,
            ..*base
        },
        scores,
    ))
}

/// Name for a categorical split rule, used in reports.
pub fn describe_node(node: &Node, features: &[Feature]) -> String {
    match node {
        Node::Leaf { value } => format!("leaf {value:.6}"),
        Node::Numeric { feature, threshold, .. } => format!("{} <= {threshold}", features[*feature].name),
        Node::Categorical { feature, goes_left, .. } => {
            let f = &features[*feature];
            let left: Vec<&str> = goes_left
                .iter()
                .enumerate()
                .filter(|(_, &l)| l)
                .map(|(k, _)| f.levels().get(k).map_or("?", |s| s.as_str()))
                .collect();
            format!("{} in {{{}}}", f.name, left.join(","))
        }
    }
}
