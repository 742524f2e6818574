//! Log-link Poisson and gamma GLMs fitted by IRLS, BIC, and deviance-tree
//! binning of continuous covariates for the benchmark GLM.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Feature, Target};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, weighted_normal_equations, Cholesky};
use crate::math::{exp, lgamma, ln, ylogy_over};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PoissonLog,
    GammaLog,
}

impl Family {
    pub fn for_target(target: Target) -> Self {
        match target {
            Target::Frequency => Family::PoissonLog,
            Target::Severity => Family::GammaLog,
        }
    }
}

/// Maps a raw feature value to a group index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Grouping {
    /// Intervals `(-inf, c_1), [c_1, c_2), ..., [c_m, inf)`.
    Cuts { cuts: Vec<f64> },
    /// Level index to group index.
    Levels { map: Vec<usize>, n_groups: usize },
}

impl Grouping {
    pub fn identity(n_levels: usize) -> Self {
        Grouping::Levels {
            map: (0..n_levels).collect(),
            n_groups: n_levels,
        }
    }

    pub fn n_groups(&self) -> usize {
        match self {
            Grouping::Cuts { cuts } => cuts.len() + 1,
            Grouping::Levels { n_groups, .. } => *n_groups,
        }
    }

    pub fn group(&self, x: f64) -> Option<usize> {
        match self {
            Grouping::Cuts { cuts } => Some(cuts.partition_point(|&c| c <= x)),
            Grouping::Levels { map, .. } => {
                if x < 0.0 {
                    return None;
                }
                map.get(x as usize).copied()
            }
        }
    }

    pub fn labels(&self, feature: &Feature) -> Vec<String> {
        match self {
            Grouping::Cuts { cuts } => (0..=cuts.len())
                .map(|g| {
                    let lo = if g == 0 {
                        "-inf".to_string()
                    } else {
                        format!("{}", cuts[g - 1])
                    };
                    let hi = if g == cuts.len() {
                        "inf".to_string()
                    } else {
                        format!("{}", cuts[g])
                    };
                    format!("[{lo}, {hi})")
                })
                .collect(),
            Grouping::Levels { map, n_groups } => (0..*n_groups)
                .map(|g| {
                    let names: Vec<&str> = map
                        .iter()
                        .enumerate()
                        .filter(|(_, &m)| m == g)
                        .map(|(l, _)| feature.levels().get(l).map_or("?", |s| s.as_str()))
                        .collect();
                    names.join("|")
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub feature: usize,
    pub name: String,
    pub grouping: Grouping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Term {
    /// Treatment-coded factor.
    Factor(FactorSpec),
    /// Raw value of a continuous feature.
    Linear { feature: usize, name: String },
    /// Product of the non-reference dummies of two factors.
    Interaction { a: FactorSpec, b: FactorSpec },
}

impl Term {
    pub fn name(&self) -> String {
        match self {
            Term::Factor(f) => f.name.clone(),
            Term::Linear { name, .. } => name.clone(),
            Term::Interaction { a, b } => format!("{}:{}", a.name, b.name),
        }
    }

    pub fn features(&self) -> Vec<usize> {
        match self {
            Term::Factor(f) => vec![f.feature],
            Term::Linear { feature, .. } => vec![*feature],
            Term::Interaction { a, b } => vec![a.feature, b.feature],
        }
    }
}

/// Model terms; the intercept is always included.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub terms: Vec<Term>,
}

impl Design {
    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    /// Every feature as an ungrouped factor (categoricals) or linear term.
    pub fn main_effects(features: &[Feature]) -> Self {
        Self::new(
            features
                .iter()
                .enumerate()
                .map(|(j, f)| {
                    if f.is_categorical() {
                        Term::Factor(FactorSpec {
                            feature: j,
                            name: f.name.clone(),
                            grouping: Grouping::identity(f.n_levels()),
                        })
                    } else {
                        Term::Linear {
                            feature: j,
                            name: f.name.clone(),
                        }
                    }
                })
                .collect(),
        )
    }
}

/// Fitted layout of one term: its reference group(s) and design columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermLayout {
    pub term: Term,
    /// Reference group per factor of the term (empty for linear terms).
    pub reference: Vec<usize>,
    pub first_column: usize,
    pub n_columns: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    pub family: Family,
    pub layout: Vec<TermLayout>,
    pub column_names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Columns without training rows, pinned to zero (absorbed in the reference).
    pub dropped: Vec<String>,
    /// Mean deviance on the training rows.
    pub deviance: f64,
    pub log_likelihood: f64,
    pub n_obs: usize,
    pub n_params: usize,
    pub bic: f64,
    pub iterations: usize,
    pub fold: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IrlsConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

fn most_populous(groups: impl Iterator<Item = usize>, n_groups: usize) -> usize {
    let mut counts = vec![0usize; n_groups];
    for g in groups {
        counts[g] += 1;
    }
    let mut best = 0;
    for g in 1..n_groups {
        if counts[g] > counts[best] {
            best = g;
        }
    }
    best
}

fn group_of(f: &FactorSpec, x: f64, row: usize) -> Result<usize> {
    f.grouping.group(x).ok_or_else(|| Error::Row {
        row,
        message: format!("unseen level {x} for factor `{}`", f.name),
    })
}

fn build_layout(design: &Design, data: &Dataset) -> Result<(Vec<TermLayout>, Vec<String>)> {
    let mut layout = Vec::new();
    let mut names = vec!["(intercept)".to_string()];
    let n = data.n_rows();
    let reference_of = |f: &FactorSpec| -> Result<usize> {
        let col = data.column(f.feature);
        let mut groups = Vec::with_capacity(n);
        for (i, &x) in col.iter().enumerate() {
            groups.push(group_of(f, x, i)?);
        }
        Ok(most_populous(groups.into_iter(), f.grouping.n_groups()))
    };
    let feature_at = |j: usize| -> Result<&Feature> {
        data.features()
            .get(j)
            .ok_or_else(|| Error::InvalidInput(format!("design refers to missing feature {j}")))
    };
    for term in &design.terms {
        let first = names.len();
        let reference = match term {
            Term::Linear { name, feature } => {
                if feature_at(*feature)?.is_categorical() {
                    return Err(Error::InvalidInput(format!("linear term on categorical `{name}`")));
                }
                names.push(name.clone());
                vec![]
            }
            Term::Factor(f) => {
                let feat = feature_at(f.feature)?;
                let r = reference_of(f)?;
                let labels = f.grouping.labels(feat);
                for (g, label) in labels.iter().enumerate() {
                    if g != r {
                        names.push(format!("{}={}", f.name, label));
                    }
                }
                vec![r]
            }
            Term::Interaction { a, b } => {
                let (fa, fb) = (feature_at(a.feature)?, feature_at(b.feature)?);
                let (ra, rb) = (reference_of(a)?, reference_of(b)?);
                let (la, lb) = (a.grouping.labels(fa), b.grouping.labels(fb));
                for (ga, xa) in la.iter().enumerate() {
                    for (gb, xb) in lb.iter().enumerate() {
                        if ga != ra && gb != rb {
                            names.push(format!("{}={}:{}={}", a.name, xa, b.name, xb));
                        }
                    }
                }
                vec![ra, rb]
            }
        };
        layout.push(TermLayout {
            term: term.clone(),
            reference,
            first_column: first,
            n_columns: names.len() - first,
        });
    }
    Ok((layout, names))
}

/// Writes the design row for raw feature values `row` into `out`.
fn encode_row(layout: &[TermLayout], row: &[f64], row_index: usize, out: &mut [f64]) -> Result<()> {
    out.iter_mut().for_each(|v| *v = 0.0);
    out[0] = 1.0;
    for t in layout {
        match &t.term {
            Term::Linear { feature, .. } => out[t.first_column] = row[*feature],
            Term::Factor(f) => {
                let g = group_of(f, row[f.feature], row_index)?;
                let r = t.reference[0];
                if g != r {
                    out[t.first_column + if g > r { g - 1 } else { g }] = 1.0;
                }
            }
            Term::Interaction { a, b } => {
                let (ga, gb) = (
                    group_of(a, row[a.feature], row_index)?,
                    group_of(b, row[b.feature], row_index)?,
                );
                let (ra, rb) = (t.reference[0], t.reference[1]);
                if ga != ra && gb != rb {
                    let ia = if ga > ra { ga - 1 } else { ga };
                    let ib = if gb > rb { gb - 1 } else { gb };
                    out[t.first_column + ia * (b.grouping.n_groups() - 1) + ib] = 1.0;
                }
            }
        }
    }
    Ok(())
}

/// Sum of unit deviances (not divided by n).
fn total_deviance(family: Family, y: &[f64], mu: &[f64], prior: &[f64]) -> f64 {
    match family {
        Family::PoissonLog => y
            .iter()
            .zip(mu)
            .map(|(&y, &m)| 2.0 * (ylogy_over(y, m) - (y - m)))
            .sum(),
        Family::GammaLog => y
            .iter()
            .zip(mu)
            .zip(prior)
            .map(|((&y, &m), &a)| 2.0 * a * ((y - m) / m - ln(y / m)))
            .sum(),
    }
}

fn log_likelihood(family: Family, y: &[f64], mu: &[f64], prior: &[f64], n_params: usize) -> f64 {
    match family {
        Family::PoissonLog => y.iter().zip(mu).map(|(&y, &m)| y * ln(m) - m - lgamma(y + 1.0)).sum(),
        Family::GammaLog => {
            let n = y.len();
            let dev = total_deviance(family, y, mu, prior);
            let dof = if n > n_params { n - n_params } else { n };
            let phi = (dev / dof as f64).max(1e-300);
            y.iter()
                .zip(mu)
                .zip(prior)
                .map(|((&y, &m), &a)| {
                    let shape = a / phi;
                    shape * ln(shape / m) + (shape - 1.0) * ln(y) - shape * y / m - lgamma(shape)
                })
                .sum()
        }
    }
}

/// Fits a log-link GLM by iteratively reweighted least squares.
///
/// Poisson fits use `ln(exposure)` as offset; gamma fits weight each row by
/// its claim count. Iteration stops when the relative deviance change falls
/// below `1e-8` and fails after 100 iterations.
pub fn fit_glm(data: &Dataset, design: &Design, family: Family) -> Result<GlmModel> {
    fit_glm_with(data, design, family, IrlsConfig::default())
}

pub fn fit_glm_with(data: &Dataset, design: &Design, family: Family, config: IrlsConfig) -> Result<GlmModel> {
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::Empty("training data"));
    }
    let (layout, names) = build_layout(design, data)?;
    let p = names.len();
    let mut x = vec![0.0; n * p];
    let mut buf = vec![0.0; data.n_features()];
    for i in 0..n {
        data.row_into(i, &mut buf);
        encode_row(&layout, &buf, i, &mut x[i * p..(i + 1) * p])?;
    }
    // Columns no training row activates carry no information: pin them at zero.
    let mut active: Vec<usize> = Vec::with_capacity(p);
    let mut dropped = Vec::new();
    for c in 0..p {
        if (0..n).any(|i| x[i * p + c] != 0.0) {
            active.push(c);
        } else {
            dropped.push(names[c].clone());
        }
    }
    let q = active.len();
    let xa: Vec<f64> = if q == p {
        x
    } else {
        let mut xa = Vec::with_capacity(n * q);
        for i in 0..n {
            xa.extend(active.iter().map(|&c| x[i * p + c]));
        }
        xa
    };

    let y = data.response();
    let (offset, prior): (Vec<f64>, Vec<f64>) = match family {
        Family::PoissonLog => (data.exposure().iter().map(|&e| ln(e)).collect(), vec![1.0; n]),
        Family::GammaLog => {
            if let Some(i) = y.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::NonPositive {
                    what: "response",
                    index: i,
                    value: y[i],
                });
            }
            (vec![0.0; n], data.weight().to_vec())
        }
    };
    let start = match family {
        Family::PoissonLog => y.iter().sum::<f64>() / data.exposure().iter().sum::<f64>(),
        Family::GammaLog => crate::math::weighted_mean(y, &prior),
    };
    if !(start > 0.0) {
        return Err(Error::InvalidInput(
            "the weighted mean response must be positive".into(),
        ));
    }
    let mut beta = vec![0.0; q];
    beta[0] = ln(start);

    let linear = |beta: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let row = &xa[i * q..(i + 1) * q];
                offset[i] + row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    };
    let mut eta = linear(&beta);
    let mut mu: Vec<f64> = eta.iter().map(|&e| exp(e)).collect();
    let mut dev = total_deviance(family, y, &mu, &prior);
    let mut trace = vec![dev];
    let mut converged = false;
    let mut polished = false;
    let mut iterations = 0;
    for it in 1..=config.max_iterations {
        iterations = it;
        let (w, z): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|i| {
                let w = match family {
                    Family::PoissonLog => mu[i],
                    Family::GammaLog => prior[i],
                };
                (w, eta[i] - offset[i] + (y[i] - mu[i]) / mu[i])
            })
            .unzip();
        let (xtwx, xtwz) = weighted_normal_equations(&xa, q, &w, &z);
        let proposal = match cholesky(&xtwx, q) {
            Cholesky::Factor(l) => cholesky_solve(&l, q, &xtwz),
            Cholesky::Aliased(cols) => {
                return Err(Error::RankDeficient {
                    columns: cols.into_iter().map(|c| names[active[c]].clone()).collect(),
                })
            }
        };
        // Step halving keeps the deviance finite and non-increasing.
        let mut step = proposal;
        let mut accepted = false;
        for _ in 0..30 {
            let eta_new = linear(&step);
            let mu_new: Vec<f64> = eta_new.iter().map(|&e| exp(e)).collect();
            let dev_new = total_deviance(family, y, &mu_new, &prior);
            if dev_new.is_finite() && dev_new <= dev * (1.0 + 1e-12) + 1e-12 {
                eta = eta_new;
                mu = mu_new;
                beta = step;
                let change = (dev - dev_new).abs() / (dev_new.abs() + 0.1);
                dev = dev_new;
                trace.push(dev);
                accepted = true;
                if change < config.tolerance {
                    converged = true;
                }
                break;
            }
            step = step.iter().zip(&beta).map(|(s, b)| 0.5 * (s + b)).collect();
        }
        if !accepted {
            if converged {
                break;
            }
            return Err(Error::NotConverged { iterations: it, trace });
        }
        // One extra step after the criterion is met squares the remaining error.
        if converged {
            if polished {
                break;
            }
            polished = true;
        }
    }
    if !converged {
        return Err(Error::NotConverged { iterations, trace });
    }
    let mut coefficients = vec![0.0; p];
    for (k, &c) in active.iter().enumerate() {
        coefficients[c] = beta[k];
    }
    let ll = log_likelihood(family, y, &mu, &prior, q);
    Ok(GlmModel {
        family,
        layout,
        column_names: names,
        coefficients,
        dropped,
        deviance: dev / n as f64,
        log_likelihood: ll,
        n_obs: n,
        n_params: q,
        bic: -2.0 * ll + q as f64 * ln(n as f64),
        iterations,
        fold: None,
    })
}

impl GlmModel {
    pub fn n_columns(&self) -> usize {
        self.coefficients.len()
    }

    /// Linear predictor `x beta` for raw feature values.
    pub fn linear_predictor(&self, row: &[f64]) -> Result<f64> {
        let mut x = vec![0.0; self.n_columns()];
        encode_row(&self.layout, row, 0, &mut x)?;
        Ok(x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }

    /// `exp(x beta)`; exposure is not applied.
    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        Ok(exp(self.linear_predictor(row)?))
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; data.n_features()];
        let mut x = vec![0.0; self.n_columns()];
        (0..data.n_rows())
            .map(|i| {
                data.row_into(i, &mut buf);
                encode_row(&self.layout, &buf, i, &mut x)?;
                Ok(exp(x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>()))
            })
            .collect()
    }

    /// Features used by at least one term.
    pub fn used_features(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.layout.iter().flat_map(|t| t.term.features()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn rating_table(&self, features: &[Feature]) -> RatingTable {
        let mut factors = Vec::new();
        for t in &self.layout {
            let mut levels = Vec::new();
            match &t.term {
                Term::Factor(f) => {
                    let labels = f.grouping.labels(&features[f.feature]);
                    let r = t.reference[0];
                    for (g, label) in labels.into_iter().enumerate() {
                        let beta = if g == r {
                            0.0
                        } else {
                            self.coefficients[t.first_column + if g > r { g - 1 } else { g }]
                        };
                        levels.push(RatingLevel {
                            label,
                            coefficient: beta,
                            relativity: exp(beta),
                        });
                    }
                }
                _ => {
                    for c in t.first_column..t.first_column + t.n_columns {
                        levels.push(RatingLevel {
                            label: self.column_names[c].clone(),
                            coefficient: self.coefficients[c],
                            relativity: exp(self.coefficients[c]),
                        });
                    }
                }
            }
            factors.push(RatingFactor {
                term: t.term.name(),
                levels,
            });
        }
        RatingTable {
            family: self.family,
            base: exp(self.coefficients[0]),
            factors,
        }
    }
}

/// Multiplicative tariff: `premium = base * prod relativities`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingTable {
    pub family: Family,
    pub base: f64,
    pub factors: Vec<RatingFactor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingFactor {
    pub term: String,
    pub levels: Vec<RatingLevel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingLevel {
    pub label: String,
    pub coefficient: f64,
    pub relativity: f64,
}

/// Bayesian information criterion `-2 loglik + k ln(n)`.
pub fn bic(model: &GlmModel) -> f64 {
    -2.0 * model.log_likelihood + model.n_params as f64 * ln(model.n_obs as f64)
}

// ---------------------------------------------------------------------------
// Tree binning

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningRule {
    pub feature: usize,
    /// Strictly increasing cut points.
    pub cuts: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningConfig {
    pub max_bins: usize,
    /// Minimum share of rows per bin.
    pub min_share: f64,
    /// A split must reduce the scaled deviance by more than this times `ln(n)`.
    pub min_gain_per_log_n: f64,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            max_bins: 8,
            min_share: 0.05,
            min_gain_per_log_n: 2.0,
        }
    }
}

/// Sufficient statistics of a run of sorted distinct values.
#[derive(Clone, Copy, Default)]
struct Stat {
    rows: f64,
    a: f64,
    b: f64,
}

impl Stat {
    fn add(self, o: Stat) -> Stat {
        Stat {
            rows: self.rows + o.rows,
            a: self.a + o.a,
            b: self.b + o.b,
        }
    }
    fn sub(self, o: Stat) -> Stat {
        Stat {
            rows: self.rows - o.rows,
            a: self.a - o.a,
            b: self.b - o.b,
        }
    }
    /// Maximised log-likelihood up to a constant, times two.
    fn score(self, family: Family) -> f64 {
        match family {
            // a = sum y, b = sum e
            Family::PoissonLog => 2.0 * ylogy_over(self.a, self.b),
            // a = sum alpha, b = sum alpha y
            Family::GammaLog => -2.0 * self.a * ln(self.b / self.a),
        }
    }
}

/// Bins one continuous variable with a deviance regression tree grown best
/// first. `weight` is the exposure for Poisson and the claim count for gamma.
pub fn tree_bin(
    feature: usize,
    values: &[f64],
    response: &[f64],
    weight: &[f64],
    family: Family,
    config: &BinningConfig,
) -> Result<BinningRule> {
    let n = values.len();
    if response.len() != n || weight.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: response.len().min(weight.len()),
        });
    }
    if config.max_bins < 2 {
        return Err(Error::InvalidInput("max_bins must be at least 2".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut distinct: Vec<f64> = Vec::new();
    let mut stats: Vec<Stat> = Vec::new();
    for &i in &order {
        let s = match family {
            Family::PoissonLog => Stat {
                rows: 1.0,
                a: response[i],
                b: weight[i],
            },
            Family::GammaLog => Stat {
                rows: 1.0,
                a: weight[i],
                b: weight[i] * response[i],
            },
        };
        if distinct.last() == Some(&values[i]) {
            let last = stats.len() - 1;
            stats[last] = stats[last].add(s);
        } else {
            distinct.push(values[i]);
            stats.push(s);
        }
    }
    let mut warnings = Vec::new();
    if distinct.len() < 2 {
        warnings.push("constant variable: single bin".to_string());
        return Ok(BinningRule {
            feature,
            cuts: Vec::new(),
            warnings,
        });
    }
    let mut prefix = vec![Stat::default(); distinct.len() + 1];
    for (k, s) in stats.iter().enumerate() {
        prefix[k + 1] = prefix[k].add(*s);
    }
    let range = |a: usize, b: usize| prefix[b].sub(prefix[a]);
    let scale = match family {
        Family::PoissonLog => 1.0,
        Family::GammaLog => {
            let total = range(0, distinct.len());
            let m = total.b / total.a;
            let dev: f64 = (0..n)
                .map(|i| 2.0 * weight[i] * ((response[i] - m) / m - ln(response[i] / m)))
                .sum();
            (dev / (n.max(2) - 1) as f64).max(1e-300)
        }
    };
    let min_rows = (config.min_share * n as f64).max(1.0);
    let threshold = config.min_gain_per_log_n * ln(n as f64);
    let best_split = |a: usize, b: usize| -> Option<(f64, usize)> {
        let whole = range(a, b).score(family);
        let mut best: Option<(f64, usize)> = None;
        for s in (a + 1)..b {
            let (l, r) = (range(a, s), range(s, b));
            if l.rows < min_rows || r.rows < min_rows {
                continue;
            }
            let gain = (l.score(family) + r.score(family) - whole) / scale;
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, s));
            }
        }
        best
    };
    let mut leaves: Vec<(usize, usize)> = vec![(0, distinct.len())];
    while leaves.len() < config.max_bins {
        let mut pick: Option<(f64, usize, usize)> = None;
        for (li, &(a, b)) in leaves.iter().enumerate() {
            if let Some((g, s)) = best_split(a, b) {
                if g > threshold && pick.is_none_or(|(pg, _, _)| g > pg) {
                    pick = Some((g, li, s));
                }
            }
        }
        let Some((_, li, s)) = pick else { break };
        let (a, b) = leaves[li];
        leaves[li] = (a, s);
        leaves.insert(li + 1, (s, b));
    }
    let cuts: Vec<f64> = leaves[1..]
        .iter()
        .map(|&(a, _)| 0.5 * (distinct[a - 1] + distinct[a]))
        .collect();
    Ok(BinningRule {
        feature,
        cuts,
        warnings,
    })
}

/// Benchmark GLM: continuous features binned by [`tree_bin`], categorical
/// features as factors; features whose tree finds no split are left out.
pub fn fit_benchmark_glm(data: &Dataset, config: &BinningConfig) -> Result<GlmModel> {
    let family = Family::for_target(data.target());
    let weight = match family {
        Family::PoissonLog => data.exposure(),
        Family::GammaLog => data.weight(),
    };
    let mut terms = Vec::new();
    for (j, f) in data.features().iter().enumerate() {
        let grouping = if f.is_categorical() {
            Grouping::identity(f.n_levels())
        } else {
            let rule = tree_bin(j, data.column(j), data.response(), weight, family, config)?;
            if rule.cuts.is_empty() {
                continue;
            }
            Grouping::Cuts { cuts: rule.cuts }
        };
        terms.push(Term::Factor(FactorSpec {
            feature: j,
            name: f.name.clone(),
            grouping,
        }));
    }
    fit_glm(data, &Design::new(terms), family)
}
