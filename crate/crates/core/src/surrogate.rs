//! Surrogate GLMs: each variable's partial dependence on a black-box model
//! is segmented by optimal one-dimensional clustering, and GLMs on the
//! segmented variables are compared by BIC.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{fit_glm, Design, FactorSpec, Family, GlmModel, Grouping, Term};
use crate::interpretation::{partial_dependence, partial_dependence_2d, pd_grid, PdCurve, PD_GRID_CAP};
use crate::math::{ln, sqrt};
use crate::model::Predictor;
use crate::rng;

/// Optimal contiguous segmentation of an ordered sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segments {
    /// Start index of each segment; the first is 0.
    pub starts: Vec<usize>,
    /// Weighted within-segment sum of squared deviations.
    pub cost: f64,
    /// Weighted mean of each segment.
    pub means: Vec<f64>,
}

impl Segments {
    pub fn k(&self) -> usize {
        self.starts.len()
    }

    /// Segment index of every position.
    pub fn labels(&self, n: usize) -> Vec<usize> {
        let mut out = vec![0; n];
        for (s, &a) in self.starts.iter().enumerate() {
            let b = self.starts.get(s + 1).copied().unwrap_or(n);
            out[a..b].iter_mut().for_each(|v| *v = s);
        }
        out
    }
}

struct Prefix {
    w: Vec<f64>,
    wx: Vec<f64>,
    wxx: Vec<f64>,
}

impl Prefix {
    fn new(x: &[f64], w: &[f64]) -> Self {
        let n = x.len();
        let (mut pw, mut px, mut pxx) = (vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1]);
        for i in 0..n {
            pw[i + 1] = pw[i] + w[i];
            px[i + 1] = px[i] + w[i] * x[i];
            pxx[i + 1] = pxx[i] + w[i] * x[i] * x[i];
        }
        Self {
            w: pw,
            wx: px,
            wxx: pxx,
        }
    }

    /// Weighted SSE of positions `a..b`.
    fn sse(&self, a: usize, b: usize) -> f64 {
        if b - a == 1 {
            return 0.0;
        }
        let w = self.w[b] - self.w[a];
        let s = self.wx[b] - self.wx[a];
        let ss = self.wxx[b] - self.wxx[a];
        (ss - s * s / w).max(0.0)
    }

    fn mean(&self, a: usize, b: usize) -> f64 {
        (self.wx[b] - self.wx[a]) / (self.w[b] - self.w[a])
    }
}

fn check_inputs(values: &[f64], weights: &[f64]) -> Result<()> {
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            actual: weights.len(),
        });
    }
    if values.is_empty() {
        return Err(Error::Empty("values to segment"));
    }
    if let Some(i) = weights.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::NonPositive {
            what: "segment weight",
            index: i,
            value: weights[i],
        });
    }
    Ok(())
}

fn distinct_count(values: &[f64]) -> usize {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

/// DP tables for 1..=k_max segments: `cost[m][j]` is the best cost of the
/// first `j` positions in `m + 1` segments, `arg` the start of the last one.
fn dp_tables(p: &Prefix, n: usize, k_max: usize) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let mut cost = vec![vec![f64::INFINITY; n + 1]; k_max];
    let mut arg = vec![vec![0usize; n + 1]; k_max];
    for j in 1..=n {
        cost[0][j] = p.sse(0, j);
    }
    for m in 1..k_max {
        for j in (m + 1)..=n {
            let mut best = (f64::INFINITY, m);
            for i in m..j {
                let c = cost[m - 1][i] + p.sse(i, j);
                if c < best.0 {
                    best = (c, i);
                }
            }
            cost[m][j] = best.0;
            arg[m][j] = best.1;
        }
    }
    (cost, arg)
}

fn backtrack(p: &Prefix, arg: &[Vec<usize>], cost: f64, n: usize, k: usize) -> Segments {
    let mut starts = vec![0; k];
    let mut j = n;
    for m in (1..k).rev() {
        starts[m] = arg[m][j];
        j = starts[m];
    }
    let means = (0..k)
        .map(|s| p.mean(starts[s], starts.get(s + 1).copied().unwrap_or(n)))
        .collect();
    Segments { starts, cost, means }
}

/// Globally optimal split of `values` (in their given order) into exactly
/// `k` contiguous segments minimising the weighted within-segment sum of
/// squares.
pub fn dp_segment(values: &[f64], weights: &[f64], k: usize) -> Result<Segments> {
    check_inputs(values, weights)?;
    let distinct = distinct_count(values);
    if k == 0 || k > distinct {
        return Err(Error::InvalidInput(format!(
            "cannot form {k} segments from {distinct} distinct values"
        )));
    }
    let n = values.len();
    let p = Prefix::new(values, weights);
    let (cost, arg) = dp_tables(&p, n, k);
    Ok(backtrack(&p, &arg, cost[k - 1][n], n, k))
}

/// Optimal cost for every segment count `1..=k_max` (capped at the number
/// of distinct values).
pub fn dp_costs(values: &[f64], weights: &[f64], k_max: usize) -> Result<Vec<f64>> {
    check_inputs(values, weights)?;
    let k_max = k_max.min(distinct_count(values)).max(1);
    let n = values.len();
    let p = Prefix::new(values, weights);
    let (cost, _) = dp_tables(&p, n, k_max);
    Ok(cost.iter().map(|c| c[n]).collect())
}

/// Segment count minimising `cost_k + penalty * k * ln(sum of weights)`.
pub fn choose_k(values: &[f64], weights: &[f64], k_max: usize, penalty: f64) -> Result<usize> {
    let costs = dp_costs(values, weights, k_max.max(1))?;
    let log_w = ln(weights.iter().sum::<f64>().max(1.0 + 1e-12));
    let mut best = (costs[0] + penalty * log_w, 1);
    for (m, &c) in costs.iter().enumerate().skip(1) {
        let k = m + 1;
        let score = c + penalty * k as f64 * log_w;
        // Strict improvement keeps the smallest k on ties.
        if score < best.0 - 1e-12 * best.0.abs().max(1.0) {
            best = (score, k);
        }
    }
    Ok(best.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Largest number of groups per variable.
    pub k_max: usize,
    /// Multiplier of the `k ln(n)` group penalty.
    pub penalty: f64,
    pub grid_cap: usize,
    /// Rows averaged over in partial dependence (a seeded subsample).
    pub max_pd_rows: Option<usize>,
    /// Main-effect subsets are enumerated up to this many variables;
    /// forward selection is used beyond.
    pub exhaustive_limit: usize,
    /// Minimum non-additivity of a two-way effect for an interaction to be tried.
    pub interaction_threshold: f64,
    pub max_interactions: usize,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            k_max: 10,
            penalty: 1.0,
            grid_cap: PD_GRID_CAP,
            max_pd_rows: None,
            exhaustive_limit: 10,
            interaction_threshold: 0.05,
            max_interactions: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSegmentation {
    pub feature: usize,
    pub variable: String,
    pub pd: PdCurve,
    /// Share of rows nearest each grid point.
    pub weights: Vec<f64>,
    pub k: usize,
    /// Segment of each grid point.
    pub labels: Vec<usize>,
    pub grouping: Grouping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub terms: Vec<String>,
    pub bic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variable: String,
    pub groups: usize,
    pub selected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub glm: GlmModel,
    pub segmentations: Vec<VariableSegmentation>,
    pub candidates: Vec<CandidateScore>,
    /// `(a, b, non-additivity)` for every screened pair.
    pub interaction_screen: Vec<(String, String, f64)>,
    pub report: Vec<ReportRow>,
    pub warnings: Vec<String>,
}

/// Rows nearest each grid point (categorical: level counts), floored at a
/// small positive weight so empty grid points still enter the DP.
pub fn grid_weights(data: &Dataset, feature: usize, grid: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; grid.len()];
    let categorical = data.features()[feature].is_categorical();
    for &x in data.column(feature) {
        let g = if categorical {
            x as usize
        } else {
            let i = grid.partition_point(|&g| g < x);
            if i == 0 {
                0
            } else if i == grid.len() {
                grid.len() - 1
            } else if x - grid[i - 1] <= grid[i] - x {
                i - 1
            } else {
                i
            }
        };
        if g < w.len() {
            w[g] += 1.0;
        }
    }
    w.iter_mut().for_each(|v: &mut f64| *v = v.max(1e-6));
    w
}

fn segment_variable<P: Predictor + ?Sized>(
    model: &P,
    pd_data: &Dataset,
    data: &Dataset,
    feature: usize,
    config: &SurrogateConfig,
) -> Result<VariableSegmentation> {
    let grid = pd_grid(pd_data, feature, config.grid_cap)?;
    let pd = partial_dependence(model, "black-box", pd_data, feature, &grid)?;
    let weights = grid_weights(data, feature, &grid);
    let wsum: f64 = weights.iter().sum();
    let mean = pd.values.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
    if !(mean > 0.0) {
        return Err(Error::InvalidInput("partial dependence must be positive".into()));
    }
    let relative: Vec<f64> = pd.values.iter().map(|v| v / mean).collect();
    let categorical = data.features()[feature].is_categorical();
    // Categorical levels are ordered by effect before contiguous segmentation.
    let order: Vec<usize> = if categorical {
        let mut o: Vec<usize> = (0..grid.len()).collect();
        o.sort_by(|&a, &b| relative[a].total_cmp(&relative[b]).then(a.cmp(&b)));
        o
    } else {
        (0..grid.len()).collect()
    };
    let vals: Vec<f64> = order.iter().map(|&i| relative[i]).collect();
    let wts: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
    let k = choose_k(&vals, &wts, config.k_max, config.penalty)?;
    let seg = dp_segment(&vals, &wts, k)?;
    let sorted_labels = seg.labels(vals.len());
    let mut labels = vec![0; grid.len()];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = sorted_labels[pos];
    }
    let grouping = if categorical {
        Grouping::Levels {
            map: labels.clone(),
            n_groups: k,
        }
    } else {
        Grouping::Cuts {
            cuts: seg.starts[1..].iter().map(|&s| 0.5 * (grid[s - 1] + grid[s])).collect(),
        }
    };
    Ok(VariableSegmentation {
        feature,
        variable: data.features()[feature].name.clone(),
        pd,
        weights,
        k,
        labels,
        grouping,
    })
}

fn factor_term(s: &VariableSegmentation) -> FactorSpec {
    FactorSpec {
        feature: s.feature,
        name: s.variable.clone(),
        grouping: s.grouping.clone(),
    }
}

/// Grid value with the most rows in each segment.
fn representatives(s: &VariableSegmentation) -> Vec<f64> {
    (0..s.k)
        .map(|g| {
            let mut best: Option<usize> = None;
            for i in 0..s.labels.len() {
                if s.labels[i] == g && best.is_none_or(|b| s.weights[i] > s.weights[b]) {
                    best = Some(i);
                }
            }
            s.pd.grid[best.unwrap_or(0)]
        })
        .collect()
}

/// Share of the log-scale variation of a two-way effect not explained by
/// an additive row + column fit.
fn non_additivity(values: &[f64], na: usize, nb: usize) -> f64 {
    let l: Vec<f64> = values.iter().map(|&v| ln(v)).collect();
    let grand = l.iter().sum::<f64>() / l.len() as f64;
    let row: Vec<f64> = (0..na)
        .map(|a| l[a * nb..(a + 1) * nb].iter().sum::<f64>() / nb as f64)
        .collect();
    let col: Vec<f64> = (0..nb)
        .map(|b| (0..na).map(|a| l[a * nb + b]).sum::<f64>() / na as f64)
        .collect();
    let (mut resid, mut total) = (0.0, 0.0);
    for a in 0..na {
        for b in 0..nb {
            let v = l[a * nb + b];
            let r = v - row[a] - col[b] + grand;
            resid += r * r;
            total += (v - grand) * (v - grand);
        }
    }
    if total > 0.0 {
        sqrt(resid / total)
    } else {
        0.0
    }
}

fn try_fit(data: &Dataset, terms: Vec<Term>, family: Family, warnings: &mut Vec<String>) -> Option<GlmModel> {
    let names: Vec<String> = terms.iter().map(Term::name).collect();
    match fit_glm(data, &Design::new(terms), family) {
        Ok(m) => Some(m),
        Err(e) => {
            warnings.push(format!("candidate {names:?} skipped: {e}"));
            None
        }
    }
}

/// Distils `model` into a GLM on segmented variables, chosen by BIC and
/// fitted on the observed responses of `data` (the model's training rows).
pub fn build_surrogate<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    config: &SurrogateConfig,
) -> Result<Surrogate> {
    if data.is_empty() {
        return Err(Error::Empty("surrogate training data"));
    }
    let family = Family::for_target(data.target());
    let pd_data = match config.max_pd_rows {
        Some(m) if m < data.n_rows() => {
            let mut r = rng::stream(config.seed, "surrogate-pd", 0);
            let mut rows = sample(&mut r, data.n_rows(), m).into_vec();
            rows.sort_unstable();
            data.subset(&rows)
        }
        _ => data.clone(),
    };
    let mut warnings = Vec::new();
    let segmentations = (0..data.n_features())
        .map(|j| segment_variable(model, &pd_data, data, j, config))
        .collect::<Result<Vec<_>>>()?;
    let survivors: Vec<usize> = (0..segmentations.len()).filter(|&i| segmentations[i].k > 1).collect();
    let mut candidates = Vec::new();
    let record = |m: &GlmModel, terms: &[Term], candidates: &mut Vec<CandidateScore>| {
        candidates.push(CandidateScore {
            terms: terms.iter().map(Term::name).collect(),
            bic: m.bic,
        });
    };
    let terms_of = |set: &[usize]| -> Vec<Term> {
        set.iter()
            .map(|&i| Term::Factor(factor_term(&segmentations[i])))
            .collect()
    };
    let mut best_terms: Vec<Term> = Vec::new();
    let mut best = try_fit(data, Vec::new(), family, &mut warnings)
        .ok_or_else(|| Error::InvalidInput("intercept-only surrogate could not be fitted".into()))?;
    record(&best, &[], &mut candidates);
    let mut chosen: Vec<usize> = Vec::new();
    if survivors.is_empty() {
        warnings.push("no variable has a non-flat partial dependence; the surrogate is intercept-only".into());
    } else if survivors.len() <= config.exhaustive_limit {
        for mask in 1u64..(1u64 << survivors.len()) {
            let set: Vec<usize> = (0..survivors.len())
                .filter(|&b| mask & (1 << b) != 0)
                .map(|b| survivors[b])
                .collect();
            let terms = terms_of(&set);
            if let Some(m) = try_fit(data, terms.clone(), family, &mut warnings) {
                record(&m, &terms, &mut candidates);
                if m.bic < best.bic {
                    best = m;
                    best_terms = terms;
                    chosen = set;
                }
            }
        }
    } else {
        let mut remaining = survivors.clone();
        loop {
            let mut step: Option<(GlmModel, usize)> = None;
            for (pos, &v) in remaining.iter().enumerate() {
                let mut set = chosen.clone();
                set.push(v);
                let terms = terms_of(&set);
                if let Some(m) = try_fit(data, terms.clone(), family, &mut warnings) {
                    record(&m, &terms, &mut candidates);
                    if m.bic < step.as_ref().map_or(best.bic, |s| s.0.bic) {
                        step = Some((m, pos));
                    }
                }
            }
            let Some((m, pos)) = step else { break };
            chosen.push(remaining.remove(pos));
            best_terms = terms_of(&chosen);
            best = m;
        }
    }
    // Interaction screen on the chosen variables.
    let mut screen = Vec::new();
    let mut pairs = Vec::new();
    for a in 0..chosen.len() {
        for b in (a + 1)..chosen.len() {
            let (sa, sb) = (&segmentations[chosen[a]], &segmentations[chosen[b]]);
            let (ga, gb) = (representatives(sa), representatives(sb));
            let surface = partial_dependence_2d(model, "black-box", &pd_data, (sa.feature, sb.feature), &ga, &gb)?;
            let h = non_additivity(&surface.values, ga.len(), gb.len());
            screen.push((sa.variable.clone(), sb.variable.clone(), h));
            if h > config.interaction_threshold {
                pairs.push((h, chosen[a], chosen[b]));
            }
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut added = 0;
    for (_, a, b) in pairs {
        if added >= config.max_interactions {
            break;
        }
        let mut terms = best_terms.clone();
        terms.push(Term::Interaction {
            a: factor_term(&segmentations[a]),
            b: factor_term(&segmentations[b]),
        });
        if let Some(m) = try_fit(data, terms.clone(), family, &mut warnings) {
            record(&m, &terms, &mut candidates);
            if m.bic < best.bic {
                best = m;
                best_terms = terms;
                added += 1;
            }
        }
    }
    let report = segmentations
        .iter()
        .enumerate()
        .map(|(i, s)| ReportRow {
            variable: s.variable.clone(),
            groups: s.k,
            selected: chosen.contains(&i),
        })
        .collect();
    Ok(Surrogate {
        glm: best,
        segmentations,
        candidates,
        interaction_screen: screen,
        report,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_segment_counts() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let w = [1.0, 2.0, 1.0, 1.0];
        let all = dp_segment(&x, &w, 4).unwrap();
        assert_eq!(all.cost, 0.0);
        assert_eq!(all.starts, vec![0, 1, 2, 3]);
        let one = dp_segment(&x, &w, 1).unwrap();
        let m = (1.0 + 4.0 + 4.0 + 7.0) / 5.0;
        let sse: f64 = x.iter().zip(&w).map(|(x, w)| w * (x - m) * (x - m)).sum();
        assert!((one.cost - sse).abs() < 1e-12);
    }

    #[test]
    fn too_many_segments_is_an_error() {
        assert!(dp_segment(&[1.0, 1.0, 2.0], &[1.0; 3], 3).is_err());
    }

    #[test]
    fn flat_curve_gets_one_group() {
        assert_eq!(choose_k(&[1.0; 6], &[10.0; 6], 5, 1.0).unwrap(), 1);
    }

    #[test]
    fn non_additivity_of_product_is_zero() {
        let v = [1.0, 2.0, 3.0, 6.0];
        assert!(non_additivity(&v, 2, 2) < 1e-12);
        assert!(non_additivity(&[1.0, 1.0, 1.0, 4.0], 2, 2) > 0.1);
    }
}
