//! Technical premiums and tariff comparison: balance ratios, risk scores,
//! Lorenz and ordered Lorenz curves, Gini indices and min-max selection.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

fn check_positive(what: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        Some(i) => Err(Error::NonPositive {
            what,
            index: i,
            value: v[i],
        }),
        None => Ok(()),
    }
}

fn check_losses(losses: &[f64]) -> Result<f64> {
    if let Some(i) = losses.iter().position(|&l| !(l >= 0.0)) {
        return Err(Error::InvalidInput(alloc::format!("negative loss at row {i}")));
    }
    let total: f64 = losses.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("total observed loss is zero".into()));
    }
    Ok(total)
}

/// Expected frequency times expected severity, row by row. Pass expected
/// claim counts (rate times exposure) to obtain premiums for the period.
pub fn technical_premium(frequency: &[f64], severity: &[f64]) -> Result<Vec<f64>> {
    check_len(frequency.len(), severity.len())?;
    check_positive("frequency prediction", frequency)?;
    check_positive("severity prediction", severity)?;
    Ok(frequency.iter().zip(severity).map(|(f, s)| f * s).collect())
}

/// Predicted over observed losses.
pub fn balance_ratio(premiums: &[f64], losses: &[f64]) -> Result<f64> {
    check_len(premiums.len(), losses.len())?;
    let total = losses.iter().sum::<f64>();
    if total == 0.0 {
        return Err(Error::InvalidInput("total observed loss is zero".into()));
    }
    Ok(premiums.iter().sum::<f64>() / total)
}

/// Empirical CDF of the premiums evaluated at each premium: the share of
/// premiums less than or equal to it.
pub fn risk_scores(premiums: &[f64]) -> Vec<f64> {
    let n = premiums.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| premiums[a].total_cmp(&premiums[b]));
    let mut scores = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && premiums[order[j + 1]] == premiums[order[i]] {
            j += 1;
        }
        let r = (j + 1) as f64 / n as f64;
        for &k in &order[i..=j] {
            scores[k] = r;
        }
        i = j + 1;
    }
    scores
}

/// `LC(s)`: share of losses from policies with risk score at most `s`.
pub fn lorenz_curve(scores: &[f64], losses: &[f64], s_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_len(scores.len(), losses.len())?;
    check_losses(losses)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut sorted_s = Vec::with_capacity(order.len());
    let mut cum = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for &i in &order {
        acc += losses[i];
        sorted_s.push(scores[i]);
        cum.push(acc);
    }
    // Same summation order as the running sums, so LC(1) is exactly 1.
    let total = acc;
    Ok(s_grid
        .iter()
        .map(|&s| {
            let k = sorted_s.partition_point(|&r| r <= s);
            (s, if k == 0 { 0.0 } else { cum[k - 1] / total })
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorenzPoint {
    pub premium_share: f64,
    pub loss_share: f64,
}

/// Relative tolerance under which two relativities count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// Ordered Lorenz curve of challenger B against base A: policies sorted by
/// the relativity `B / A` (stable, ties by row index) accumulate A's
/// premium share and the loss share. Points are emitted only at the end of
/// each group of tied relativities, so a fully tied ordering is the diagonal.
pub fn ordered_lorenz(prem_a: &[f64], prem_b: &[f64], losses: &[f64]) -> Result<Vec<LorenzPoint>> {
    check_len(prem_a.len(), prem_b.len())?;
    check_len(prem_a.len(), losses.len())?;
    check_positive("base premium", prem_a)?;
    let total_loss = check_losses(losses)?;
    let total_prem: f64 = prem_a.iter().sum();
    let rel: Vec<f64> = prem_b.iter().zip(prem_a).map(|(b, a)| b / a).collect();
    let mut order: Vec<usize> = (0..rel.len()).collect();
    order.sort_by(|&a, &b| rel[a].total_cmp(&rel[b]).then(a.cmp(&b)));
    let mut points = vec![LorenzPoint {
        premium_share: 0.0,
        loss_share: 0.0,
    }];
    let (mut p, mut l) = (0.0, 0.0);
    for (pos, &i) in order.iter().enumerate() {
        p += prem_a[i];
        l += losses[i];
        let tied_with_next = order.get(pos + 1).is_some_and(|&j| {
            let (x, y) = (rel[i], rel[j]);
            (y - x).abs() <= TIE_TOL * x.abs().max(y.abs())
        });
        if !tied_with_next {
            points.push(LorenzPoint {
                premium_share: p / total_prem,
                loss_share: l / total_loss,
            });
        }
    }
    // Pin the end point against rounding.
    if let Some(last) = points.last_mut() {
        *last = LorenzPoint {
            premium_share: 1.0,
            loss_share: 1.0,
        };
    }
    Ok(points)
}

/// Twice the area between the diagonal and the curve (trapezoid rule);
/// positive when the curve lies below the diagonal.
pub fn gini_index(points: &[LorenzPoint]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("a Lorenz curve needs at least two points".into()));
    }
    if points.windows(2).any(|w| w[1].premium_share < w[0].premium_share) {
        return Err(Error::InvalidInput(
            "Lorenz points must be sorted by premium share".into(),
        ));
    }
    let area: f64 = points
        .windows(2)
        .map(|w| 0.5 * (w[1].premium_share - w[0].premium_share) * (w[0].loss_share + w[1].loss_share))
        .sum();
    Ok(1.0 - 2.0 * area)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GiniMatrix {
    pub models: Vec<String>,
    /// `values[a][b]`: Gini of challenger `b` against base `a`; `None` on the diagonal.
    pub values: Vec<Vec<Option<f64>>>,
}

/// Gini index of every ordered pair of tariffs.
pub fn gini_matrix(models: &[String], premiums: &[Vec<f64>], losses: &[f64]) -> Result<GiniMatrix> {
    check_len(models.len(), premiums.len())?;
    let m = models.len();
    let mut values = vec![vec![None; m]; m];
    for a in 0..m {
        for b in 0..m {
            if a != b {
                values[a][b] = Some(gini_index(&ordered_lorenz(&premiums[a], &premiums[b], losses)?)?);
            }
        }
    }
    Ok(GiniMatrix {
        models: models.to_vec(),
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub selected: usize,
    /// Largest off-diagonal entry of each row.
    pub row_max: Vec<f64>,
    /// Rows sharing the minimal row maximum (more than one means a tie,
    /// resolved by the first index).
    pub tied: Vec<usize>,
}

/// Row whose largest off-diagonal Gini is smallest.
pub fn minmax_select(values: &[Vec<Option<f64>>]) -> Result<MinMax> {
    let m = values.len();
    if m == 0 {
        return Err(Error::Empty("Gini matrix"));
    }
    if let Some(r) = values.iter().find(|r| r.len() != m) {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: r.len(),
        });
    }
    let row_max: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(a, row)| {
            row.iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .filter_map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let best = row_max.iter().cloned().fold(f64::INFINITY, f64::min);
    let tied: Vec<usize> = (0..m).filter(|&a| row_max[a] == best).collect();
    Ok(MinMax {
        selected: tied[0],
        row_max,
        tied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn premium_is_product() {
        assert_eq!(technical_premium(&[0.1], &[2000.0]).unwrap(), vec![200.0]);
        assert!(technical_premium(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn ecdf_scores() {
        assert_eq!(risk_scores(&[3.0, 1.0, 4.0, 2.0]), vec![0.75, 0.25, 1.0, 0.5]);
        assert_eq!(risk_scores(&[2.0; 3]), vec![1.0; 3]);
        assert_eq!(risk_scores(&[1.0, 2.0, 1.0]), vec![2.0 / 3.0, 1.0, 2.0 / 3.0]);
    }

    #[test]
    fn loss_at_top_score() {
        let c = lorenz_curve(&[1.0 / 3.0, 2.0 / 3.0, 1.0], &[0.0, 0.0, 5.0], &[0.0, 0.5, 0.99, 1.0]).unwrap();
        assert_eq!(c.iter().map(|p| p.1).collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn self_comparison_is_diagonal() {
        let a = [1.0, 2.0, 3.0];
        let pts = ordered_lorenz(&a, &a, &[5.0, 0.0, 1.0]).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(gini_index(&pts).unwrap(), 0.0);
    }

    #[test]
    fn single_model_minmax() {
        assert_eq!(minmax_select(&[vec![None]]).unwrap().selected, 0);
    }
}
