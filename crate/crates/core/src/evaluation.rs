//! Deviance losses, Diebold-Mariano tests, Murphy diagrams, calibration
//! tables and prediction histograms.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{floor, ln, sqrt, student_t_cdf, ylogy_over};

/// Per-observation loss contributions before the `2 / n` aggregation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossVector {
    pub model: String,
    pub fold: Option<usize>,
    pub values: Vec<f64>,
}

impl LossVector {
    pub fn deviance(&self) -> f64 {
        2.0 * self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

/// Poisson contributions `y ln(y / (e f)) - (y - e f)`.
pub fn poisson_terms(predictions: &[f64], responses: &[f64], exposures: &[f64]) -> Result<Vec<f64>> {
    check_len(predictions.len(), responses.len())?;
    check_len(predictions.len(), exposures.len())?;
    predictions
        .iter()
        .zip(responses)
        .zip(exposures)
        .enumerate()
        .map(|(i, ((&f, &y), &e))| {
            if !(f > 0.0) {
                return Err(Error::NonPositive {
                    what: "prediction",
                    index: i,
                    value: f,
                });
            }
            if !(e > 0.0) {
                return Err(Error::NonPositive {
                    what: "exposure",
                    index: i,
                    value: e,
                });
            }
            if !(y >= 0.0) {
                return Err(Error::InvalidInput(alloc::format!("negative claim count at {i}")));
            }
            let mu = e * f;
            Ok(ylogy_over(y, mu) - (y - mu))
        })
        .collect()
}

/// Mean Poisson deviance with the prediction scaled by exposure.
pub fn poisson_deviance(predictions: &[f64], responses: &[f64], exposures: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let t = poisson_terms(predictions, responses, exposures)?;
    Ok(2.0 * t.iter().sum::<f64>() / t.len() as f64)
}

/// Gamma contributions `alpha ((y - f) / f - ln(y / f))`.
pub fn gamma_terms(predictions: &[f64], responses: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    check_len(predictions.len(), responses.len())?;
    check_len(predictions.len(), weights.len())?;
    predictions
        .iter()
        .zip(responses)
        .zip(weights)
        .enumerate()
        .map(|(i, ((&f, &y), &a))| {
            if !(f > 0.0) {
                return Err(Error::NonPositive {
                    what: "prediction",
                    index: i,
                    value: f,
                });
            }
            if !(y > 0.0) {
                return Err(Error::NonPositive {
                    what: "response",
                    index: i,
                    value: y,
                });
            }
            Ok(a * ((y - f) / f - ln(y / f)))
        })
        .collect()
}

pub fn gamma_deviance(predictions: &[f64], responses: &[f64], weights: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let t = gamma_terms(predictions, responses, weights)?;
    Ok(2.0 * t.iter().sum::<f64>() / t.len() as f64)
}

// ---------------------------------------------------------------------------
// Diebold-Mariano

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmVerdict {
    /// Equal accuracy rejected in favour of model B.
    Reject,
    NoRejection,
    /// Every loss differential is zero.
    Identical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub model_a: String,
    pub model_b: String,
    pub statistic: f64,
    pub p_value: f64,
    pub verdict: DmVerdict,
}

pub const DM_LEVEL: f64 = 0.05;

/// One-sided Diebold-Mariano test of equal accuracy against the alternative
/// that model B has lower expected loss than model A.
///
/// The differentials `d_i = loss_a_i - loss_b_i` are treated as independent
/// (cross-sectional data): the statistic is the one-sample t statistic of
/// `d` with `n - 1` degrees of freedom.
pub fn diebold_mariano(loss_a: &LossVector, loss_b: &LossVector) -> Result<DmResult> {
    check_len(loss_a.values.len(), loss_b.values.len())?;
    let n = loss_a.values.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "Diebold-Mariano needs at least two observations".into(),
        ));
    }
    let d: Vec<f64> = loss_a.values.iter().zip(&loss_b.values).map(|(a, b)| a - b).collect();
    let base = DmResult {
        model_a: loss_a.model.clone(),
        model_b: loss_b.model.clone(),
        statistic: 0.0,
        p_value: 1.0,
        verdict: DmVerdict::Identical,
    };
    if d.iter().all(|&x| x == 0.0) {
        return Ok(base);
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let statistic = if var > 0.0 {
        mean / sqrt(var / n as f64)
    } else if mean > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    let p_value = 1.0 - student_t_cdf(statistic, (n - 1) as f64);
    Ok(DmResult {
        statistic,
        p_value,
        verdict: if p_value < DM_LEVEL {
            DmVerdict::Reject
        } else {
            DmVerdict::NoRejection
        },
        ..base
    })
}

// ---------------------------------------------------------------------------
// Murphy diagrams

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MurphyCurve {
    pub model: String,
    pub theta: Vec<f64>,
    pub score: Vec<f64>,
}

/// Number of evenly spaced fill points added to the data knots.
pub const MURPHY_FILL_POINTS: usize = 501;

/// All distinct responses and predictions plus evenly spaced fill points
/// over their joint range, sorted ascending.
pub fn default_theta_grid(predictions: &[f64], responses: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = predictions.iter().chain(responses).copied().collect();
    if grid.is_empty() {
        return grid;
    }
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for k in 0..MURPHY_FILL_POINTS {
        grid.push(lo + (hi - lo) * k as f64 / (MURPHY_FILL_POINTS - 1) as f64);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Elementary score `S_theta = (1/n) sum |theta - y| 1{min(f,y) <= theta < max(f,y)}`
/// on a sorted grid, evaluated with a sweep over interval endpoints.
pub fn murphy_curve(model: &str, predictions: &[f64], responses: &[f64], theta: &[f64]) -> Result<MurphyCurve> {
    check_len(predictions.len(), responses.len())?;
    if theta.is_empty() {
        return Err(Error::Empty("theta grid"));
    }
    if theta.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("theta grid must be sorted ascending".into()));
    }
    let n = predictions.len();
    // Intervals where y is the lower end contribute theta - y, the others y - theta.
    // Events: (position, +1/-1, group, y).
    let mut events: Vec<(f64, bool, bool, f64)> = Vec::with_capacity(2 * n);
    for (&f, &y) in predictions.iter().zip(responses) {
        if f == y {
            continue;
        }
        let y_low = y < f;
        let (lo, hi) = if y_low { (y, f) } else { (f, y) };
        events.push((lo, true, y_low, y));
        events.push((hi, false, y_low, y));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut cnt_low, mut sum_low, mut cnt_high, mut sum_high) = (0.0, 0.0, 0.0, 0.0);
    let mut e = 0;
    let mut score = Vec::with_capacity(theta.len());
    for &t in theta {
        // An interval [lo, hi) is active for lo <= t < hi.
        while e < events.len() && events[e].0 <= t {
            let (_, open, low, y) = events[e];
            let s = if open { 1.0 } else { -1.0 };
            if low {
                cnt_low += s;
                sum_low += s * y;
            } else {
                cnt_high += s;
                sum_high += s * y;
            }
            e += 1;
        }
        let v = (cnt_low * t - sum_low) + (sum_high - cnt_high * t);
        score.push(if n == 0 { 0.0 } else { v.max(0.0) / n as f64 });
    }
    Ok(MurphyCurve {
        model: model.into(),
        theta: theta.to_vec(),
        score,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    ADominates,
    BDominates,
    Incomparable,
    Tied,
}

pub const DOMINANCE_TOL: f64 = 1e-12;

pub fn dominance(a: &MurphyCurve, b: &MurphyCurve) -> Result<Dominance> {
    if a.theta != b.theta {
        return Err(Error::GridMismatch);
    }
    let mut a_le = true;
    let mut b_le = true;
    for (sa, sb) in a.score.iter().zip(&b.score) {
        if *sa > sb + DOMINANCE_TOL {
            a_le = false;
        }
        if *sb > sa + DOMINANCE_TOL {
            b_le = false;
        }
    }
    Ok(match (a_le, b_le) {
        (true, true) => Dominance::Tied,
        (true, false) => Dominance::ADominates,
        (false, true) => Dominance::BDominates,
        (false, false) => Dominance::Incomparable,
    })
}

// ---------------------------------------------------------------------------
// Calibration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BinSpec {
    /// `bins - 1` evenly spaced interior split points from the `lower` to
    /// the `upper` quantile of the predictions.
    Quantile { lower: f64, upper: f64, intervals: usize },
    /// Explicit split points `s_1 < ... < s_m`.
    Edges { edges: Vec<f64> },
}

impl Default for BinSpec {
    fn default() -> Self {
        BinSpec::Quantile {
            lower: 0.1,
            upper: 0.9,
            intervals: 10,
        }
    }
}

impl BinSpec {
    /// Split points `start, start + step, ..., end`.
    pub fn stepped(start: f64, step: f64, end: f64) -> Self {
        let n = floor((end - start) / step + 0.5) as usize;
        BinSpec::Edges {
            edges: (0..=n).map(|k| start + step * k as f64).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    /// Lower edge, `-inf` for the first bin.
    pub lower: f64,
    /// Upper edge, `+inf` for the last bin.
    pub upper: f64,
    pub mean_prediction: f64,
    pub mean_response: f64,
    pub count: usize,
    /// Bin absorbed at least one empty neighbour.
    pub merged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub edges: Vec<f64>,
    pub bins: Vec<CalibrationBin>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = floor(pos) as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Average response per prediction bin `(-inf, s_1), [s_1, s_2), ..., [s_m, inf)`.
/// Empty bins are merged into their right neighbour (the last into its left).
pub fn calibration_curve(predictions: &[f64], responses: &[f64], spec: &BinSpec) -> Result<CalibrationTable> {
    check_len(predictions.len(), responses.len())?;
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let mut edges = match spec {
        BinSpec::Quantile {
            lower,
            upper,
            intervals,
        } => {
            let mut sorted = predictions.to_vec();
            sorted.sort_by(f64::total_cmp);
            let lo = quantile(&sorted, *lower);
            let hi = quantile(&sorted, *upper);
            let m = (*intervals).max(1);
            (0..=m)
                .map(|k| lo + (hi - lo) * k as f64 / m as f64)
                .collect::<Vec<_>>()
        }
        BinSpec::Edges { edges } => edges.clone(),
    };
    edges.dedup();
    if edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("bin edges must be strictly increasing".into()));
    }
    let nb = edges.len() + 1;
    let mut sum_p = vec![0.0; nb];
    let mut sum_y = vec![0.0; nb];
    let mut count = vec![0usize; nb];
    for (&p, &y) in predictions.iter().zip(responses) {
        let b = edges.partition_point(|&e| e <= p);
        sum_p[b] += p;
        sum_y[b] += y;
        count[b] += 1;
    }
    let bounds = |b: usize| {
        (
            if b == 0 { f64::NEG_INFINITY } else { edges[b - 1] },
            if b == nb - 1 { f64::INFINITY } else { edges[b] },
        )
    };
    let mut bins: Vec<CalibrationBin> = Vec::new();
    let mut pending: Option<(f64, bool)> = None;
    for b in 0..nb {
        let (lower, upper) = bounds(b);
        if count[b] == 0 {
            let lo = pending.map_or(lower, |p| p.0);
            pending = Some((lo, true));
            continue;
        }
        let (lower, merged) = pending.take().unwrap_or((lower, false));
        bins.push(CalibrationBin {
            lower,
            upper,
            mean_prediction: sum_p[b] / count[b] as f64,
            mean_response: sum_y[b] / count[b] as f64,
            count: count[b],
            merged,
        });
    }
    if pending.is_some() {
        if let Some(last) = bins.last_mut() {
            last.upper = f64::INFINITY;
            last.merged = true;
        }
    }
    Ok(CalibrationTable { edges, bins })
}

// ---------------------------------------------------------------------------
// Histograms

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Counts per bin `[k w, (k + 1) w)`, occupied range only.
pub fn prediction_histogram(predictions: &[f64], bin_width: f64) -> Result<Vec<HistogramBin>> {
    if !(bin_width > 0.0) {
        return Err(Error::InvalidInput("bin width must be positive".into()));
    }
    if predictions.is_empty() {
        return Ok(Vec::new());
    }
    // Guard against 0.3 / 0.1 = 2.9999999999999996 style round-off.
    let index = |p: f64| floor(p / bin_width * (1.0 + 1e-12) + 1e-12) as i64;
    let lo = predictions.iter().map(|&p| index(p)).min().unwrap_or(0);
    let hi = predictions.iter().map(|&p| index(p)).max().unwrap_or(0);
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for &p in predictions {
        counts[(index(p) - lo) as usize] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| {
            let b = (lo + k as i64) as f64;
            HistogramBin {
                lower: b * bin_width,
                upper: (b + 1.0) * bin_width,
                count,
            }
        })
        .collect())
}
