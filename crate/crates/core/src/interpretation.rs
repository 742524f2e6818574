//! Permutation variable importance, partial dependence and Monte-Carlo
//! Shapley values for any [`Predictor`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::floor;
use crate::model::Predictor;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: usize,
    pub variable: String,
    pub vip: f64,
    /// `vip` divided by the sum over all variables.
    pub relative: f64,
}

/// Permutation importance: `sum_i |f(x_i) - f(x_i with x_j permuted)|`,
/// averaged over `repeats` permutations (one shared permutation per
/// variable and repeat).
pub fn permutation_vip<P: Predictor + ?Sized>(
    model: &P,
    data: &Dataset,
    seed: u64,
    repeats: usize,
) -> Result<Vec<Importance>> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation data"));
    }
    let repeats = repeats.max(1);
    let base = model.predict(data)?;
    let mut out = Vec::with_capacity(data.n_features());
    for j in 0..data.n_features() {
        let mut total = 0.0;
        for r in 0..repeats {
            let mut col = data.column(j).to_vec();
            col.shuffle(&mut rng::stream(seed, "vip", (j * 1024 + r) as u64));
            let permuted = model.predict(&data.with_column(j, col)?)?;
            total += base.iter().zip(&permuted).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        out.push(Importance {
            feature: j,
            variable: data.features()[j].name.clone(),
            vip: total / repeats as f64,
            relative: 0.0,
        });
    }
    let sum: f64 = out.iter().map(|v| v.vip).sum();
    if sum > 0.0 {
        out.iter_mut().for_each(|v| v.relative = v.vip / sum);
    }
    Ok(out)
}

pub const PD_GRID_CAP: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdCurve {
    pub model: String,
    pub feature: usize,
    pub variable: String,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Default grid: every level of a categorical; for a continuous feature the
/// range from min to max in steps of the smallest gap between observed
/// values, evenly subsampled to at most `cap` points.
pub fn pd_grid(data: &Dataset, feature: usize, cap: usize) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation data"));
    }
    let f = &data.features()[feature];
    if f.is_categorical() {
        return Ok((0..f.n_levels()).map(|l| l as f64).collect());
    }
    let mut v = data.column(feature).to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let (lo, hi) = (v[0], v[v.len() - 1]);
    if v.len() == 1 {
        return Ok(vec![lo]);
    }
    let step = v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let cap = cap.max(2);
    let steps = floor((hi - lo) / step + 0.5) as usize;
    let grid = if steps < cap {
        (0..=steps)
            .map(|k| if k == steps { hi } else { lo + k as f64 * step })
            .collect()
    } else {
        (0..cap)
            .map(|k| {
                let s = floor(k as f64 * steps as f64 / (cap - 1) as f64 + 0.5);
                if k == cap - 1 {
                    hi
                } else {
                    lo + s * step
                }
            })
            .collect()
    };
    Ok(grid)
}

/// Average prediction over `data` with feature `feature` set to each grid value.
pub fn partial_dependence<P: Predictor + ?Sized>(
    model: &P,
    model_name: &str,
    data: &Dataset,
    feature: usize,
    grid: &[f64],
) -> Result<PdCurve> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation data"));
    }
    if grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidInput("partial dependence grid must be finite".into()));
    }
    let n = data.n_rows() as f64;
    let values = grid
        .iter()
        .map(|&g| {
            let preds = model.predict(&data.with_column(feature, vec![g; data.n_rows()])?)?;
            Ok(preds.iter().sum::<f64>() / n)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(PdCurve {
        model: model_name.into(),
        feature,
        variable: data.features()[feature].name.clone(),
        grid: grid.to_vec(),
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdSurface {
    pub model: String,
    pub features: (usize, usize),
    pub grid_a: Vec<f64>,
    pub grid_b: Vec<f64>,
    /// Row-major `grid_a.len() x grid_b.len()`.
    pub values: Vec<f64>,
}

impl PdSurface {
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.grid_b.len() + b]
    }
}

/// Two-way partial dependence over the product of two grids.
pub fn partial_dependence_2d<P: Predictor + ?Sized>(
    model: &P,
    model_name: &str,
    data: &Dataset,
    (fa, fb): (usize, usize),
    grid_a: &[f64],
    grid_b: &[f64],
) -> Result<PdSurface> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation data"));
    }
    let n = data.n_rows();
    let mut values = Vec::with_capacity(grid_a.len() * grid_b.len());
    for &a in grid_a {
        let da = data.with_column(fa, vec![a; n])?;
        for &b in grid_b {
            let preds = model.predict(&da.with_column(fb, vec![b; n])?)?;
            values.push(preds.iter().sum::<f64>() / n as f64);
        }
    }
    Ok(PdSurface {
        model: model_name.into(),
        features: (fa, fb),
        grid_a: grid_a.to_vec(),
        grid_b: grid_b.to_vec(),
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyValues {
    /// Mean prediction over the background rows.
    pub base: f64,
    pub prediction: f64,
    pub contributions: Vec<f64>,
    /// Orderings evaluated; all `p!` of them when `exact`.
    pub permutations: usize,
    pub exact: bool,
}

pub const SHAPLEY_BACKGROUND: usize = 500;

fn factorial_at_most(p: usize, limit: usize) -> bool {
    let mut f: usize = 1;
    for k in 2..=p {
        f = match f.checked_mul(k) {
            Some(v) => v,
            None => return false,
        };
        if f > limit {
            return false;
        }
    }
    true
}

fn all_permutations(p: usize) -> Vec<Vec<usize>> {
    // Heap's algorithm.
    let mut a: Vec<usize> = (0..p).collect();
    let mut out = vec![a.clone()];
    let mut c = vec![0; p];
    let mut i = 1;
    while i < p {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Shapley contributions of `row` with value function `v(S)` = mean
/// prediction over the background rows with the features in `S` set to the
/// row's values. Each sampled ordering telescopes from `v({})` to `f(row)`,
/// so contributions always sum to `prediction - base`. When `p!` does not
/// exceed `n_permutations` every ordering is enumerated once.
pub fn shapley_mc<P: Predictor + ?Sized>(
    model: &P,
    background: &Dataset,
    row: &[f64],
    n_permutations: usize,
    seed: u64,
) -> Result<ShapleyValues> {
    if n_permutations == 0 {
        return Err(Error::InvalidInput("at least one permutation is required".into()));
    }
    if background.is_empty() {
        return Err(Error::Empty("background rows"));
    }
    let p = background.n_features();
    if row.len() != p {
        return Err(Error::LengthMismatch {
            expected: p,
            actual: row.len(),
        });
    }
    let mut rng = rng::stream(seed, "shapley", 0);
    let bg_rows: Vec<usize> = if background.n_rows() > SHAPLEY_BACKGROUND {
        let mut r = sample(&mut rng, background.n_rows(), SHAPLEY_BACKGROUND).into_vec();
        r.sort_unstable();
        r
    } else {
        (0..background.n_rows()).collect()
    };
    let bg: Vec<Vec<f64>> = bg_rows.iter().map(|&i| background.row(i)).collect();
    let mean_pred = |rows: &[Vec<f64>]| -> Result<f64> {
        let mut s = 0.0;
        for r in rows {
            s += model.predict_row(r)?;
        }
        Ok(s / rows.len() as f64)
    };
    let base = mean_pred(&bg)?;
    let prediction = model.predict_row(row)?;
    let exact = factorial_at_most(p, n_permutations);
    let orders: Vec<Vec<usize>> = if exact {
        all_permutations(p)
    } else {
        (0..n_permutations)
            .map(|_| {
                let mut o: Vec<usize> = (0..p).collect();
                o.shuffle(&mut rng);
                o
            })
            .collect()
    };
    let mut contributions = vec![0.0; p];
    for order in &orders {
        let mut z = bg.clone();
        let mut prev = base;
        for (step, &j) in order.iter().enumerate() {
            for r in z.iter_mut() {
                r[j] = row[j];
            }
            // The last step is the row itself for every background row.
            let v = if step + 1 == p { prediction } else { mean_pred(&z)? };
            contributions[j] += v - prev;
            prev = v;
        }
    }
    let m = orders.len() as f64;
    contributions.iter_mut().for_each(|c| *c /= m);
    Ok(ShapleyValues {
        base,
        prediction,
        contributions,
        permutations: orders.len(),
        exact,
    })
}

/// Label of grid point `g` of feature `j` for reports.
pub fn grid_label(data: &Dataset, feature: usize, value: f64) -> String {
    let f = &data.features()[feature];
    if f.is_categorical() {
        f.levels()
            .get(value as usize)
            .cloned()
            .unwrap_or_else(|| format!("{value}"))
    } else {
        format!("{value}")
    }
}
