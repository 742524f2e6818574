//! Portfolio data: schema, typed dataset, preprocessing, severity view,
//! stratified folds and a synthetic portfolio generator.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, floor, mean, sample_sd};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
    Exposure,
    Response,
    ClaimCount,
}

impl ColumnKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "continuous" => Self::Continuous,
            "categorical" => Self::Categorical,
            "exposure" => Self::Exposure,
            "response" => Self::Response,
            "claim_count" => Self::ClaimCount,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Continuous => "continuous",
            Self::Categorical => "categorical",
            Self::Exposure => "exposure",
            Self::Response => "response",
            Self::ClaimCount => "claim_count",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl ColumnSpec {
    pub fn new(name: &str, kind: ColumnKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            levels: Vec::new(),
        }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Categorical,
            levels: levels.iter().map(|l| l.to_string()).collect(),
        }
    }
}

/// Declared layout of a portfolio file.
///
/// Exactly one response column, at most one exposure column, at most one
/// claim-count column, unique non-empty levels on every categorical column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    columns: Vec<ColumnSpec>,
}

impl ColumnSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let count = |k| columns.iter().filter(|c| c.kind == k).count();
        if count(ColumnKind::Response) != 1 {
            return Err(Error::Schema("exactly one response column is required".into()));
        }
        if count(ColumnKind::Exposure) > 1 {
            return Err(Error::Schema("at most one exposure column is allowed".into()));
        }
        if count(ColumnKind::ClaimCount) > 1 {
            return Err(Error::Schema("at most one claim_count column is allowed".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
            match c.kind {
                ColumnKind::Categorical => {
                    if c.levels.is_empty() {
                        return Err(Error::Schema(format!("categorical `{}` has no levels", c.name)));
                    }
                    for (j, l) in c.levels.iter().enumerate() {
                        if c.levels[..j].contains(l) {
                            return Err(Error::Schema(format!("categorical `{}` repeats level `{l}`", c.name)));
                        }
                    }
                }
                _ if !c.levels.is_empty() => {
                    return Err(Error::Schema(format!(
                        "only categorical columns take levels (`{}`)",
                        c.name
                    )));
                }
                _ => {}
            }
        }
        Ok(Self { columns })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn find(&self, kind: ColumnKind) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.kind == kind)
    }

    /// The model inputs, in schema order.
    pub fn features(&self) -> Vec<Feature> {
        self.columns
            .iter()
            .filter_map(|c| match c.kind {
                ColumnKind::Continuous => Some(Feature::continuous(&c.name)),
                ColumnKind::Categorical => Some(Feature {
                    name: c.name.clone(),
                    kind: FeatureKind::Categorical {
                        levels: c.levels.clone(),
                    },
                }),
                _ => None,
            })
            .collect()
    }

    /// Frequency data carries an exposure column; severity data a claim count.
    pub fn target(&self) -> Target {
        if self.find(ColumnKind::ClaimCount).is_some() && self.find(ColumnKind::Exposure).is_none() {
            Target::Severity
        } else {
            Target::Frequency
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical { levels: Vec<String> },
}

/// A model input. Categorical values are stored as level indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
}

impl Feature {
    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
        }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Categorical {
                levels: levels.iter().map(|l| l.to_string()).collect(),
            },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn n_levels(&self) -> usize {
        match &self.kind {
            FeatureKind::Categorical { levels } => levels.len(),
            FeatureKind::Continuous => 0,
        }
    }

    pub fn levels(&self) -> &[String] {
        match &self.kind {
            FeatureKind::Categorical { levels } => levels,
            FeatureKind::Continuous => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Frequency,
    Severity,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Frequency => "frequency",
            Target::Severity => "severity",
        }
    }
}

/// Column-oriented portfolio.
///
/// For frequency data the response is the claim count and `exposure` the
/// year fraction in force; `weight` is 1. For severity data the response is
/// the average claim amount, `weight` the number of claims it averages and
/// `exposure` is 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    target: Target,
    features: Vec<Feature>,
    columns: Vec<Vec<f64>>,
    exposure: Vec<f64>,
    response: Vec<f64>,
    weight: Vec<f64>,
    row_ids: Vec<usize>,
}

impl Dataset {
    /// Frequency dataset. Row ids default to `0..n`.
    pub fn frequency(
        features: Vec<Feature>,
        columns: Vec<Vec<f64>>,
        exposure: Vec<f64>,
        claims: Vec<f64>,
    ) -> Result<Self> {
        let n = claims.len();
        Self::build(
            Target::Frequency,
            features,
            columns,
            exposure,
            claims,
            vec![1.0; n],
            (0..n).collect(),
        )
    }

    pub fn severity(
        features: Vec<Feature>,
        columns: Vec<Vec<f64>>,
        average_amount: Vec<f64>,
        claim_counts: Vec<f64>,
    ) -> Result<Self> {
        let n = average_amount.len();
        Self::build(
            Target::Severity,
            features,
            columns,
            vec![1.0; n],
            average_amount,
            claim_counts,
            (0..n).collect(),
        )
    }

    pub fn build(
        target: Target,
        features: Vec<Feature>,
        columns: Vec<Vec<f64>>,
        exposure: Vec<f64>,
        response: Vec<f64>,
        weight: Vec<f64>,
        row_ids: Vec<usize>,
    ) -> Result<Self> {
        let n = response.len();
        if columns.len() != features.len() {
            return Err(Error::LengthMismatch {
                expected: features.len(),
                actual: columns.len(),
            });
        }
        for len in columns
            .iter()
            .map(Vec::len)
            .chain([exposure.len(), weight.len(), row_ids.len()])
        {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        for (f, col) in features.iter().zip(&columns) {
            for (i, &v) in col.iter().enumerate() {
                let ok = match &f.kind {
                    FeatureKind::Continuous => v.is_finite(),
                    FeatureKind::Categorical { levels } => v >= 0.0 && v == floor(v) && (v as usize) < levels.len(),
                };
                if !ok {
                    return Err(Error::Row {
                        row: i,
                        message: format!("invalid value {v} for `{}`", f.name),
                    });
                }
            }
        }
        for i in 0..n {
            let (e, y, w) = (exposure[i], response[i], weight[i]);
            let bad = match target {
                Target::Frequency => {
                    if !(e > 0.0 && e.is_finite()) {
                        Some(format!("exposure must be strictly positive, got {e}"))
                    } else if !(y >= 0.0 && y == floor(y) && y.is_finite()) {
                        Some(format!("claim count must be a non-negative integer, got {y}"))
                    } else {
                        None
                    }
                }
                Target::Severity => {
                    if !(y > 0.0 && y.is_finite()) {
                        Some(format!("severity response must be positive, got {y}"))
                    } else if !(w >= 1.0 && w.is_finite()) {
                        Some(format!("severity weight must be at least 1, got {w}"))
                    } else {
                        None
                    }
                }
            };
            if let Some(message) = bad {
                return Err(Error::Row { row: i, message });
            }
        }
        Ok(Self {
            target,
            features,
            columns,
            exposure,
            response,
            weight,
            row_ids,
        })
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn exposure(&self) -> &[f64] {
        &self.exposure
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    /// Copies row `i` (features only) into `buf`.
    pub fn row_into(&self, i: usize, buf: &mut [f64]) {
        for (b, col) in buf.iter_mut().zip(&self.columns) {
            *b = col[i];
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            target: self.target,
            features: self.features.clone(),
            columns: self.columns.iter().map(|c| pick(c)).collect(),
            exposure: pick(&self.exposure),
            response: pick(&self.response),
            weight: pick(&self.weight),
            row_ids: rows.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// Copy of the dataset with feature column `j` replaced.
    pub fn with_column(&self, j: usize, values: Vec<f64>) -> Result<Dataset> {
        if values.len() != self.n_rows() {
            return Err(Error::LengthMismatch {
                expected: self.n_rows(),
                actual: values.len(),
            });
        }
        let mut out = self.clone();
        out.columns[j] = values;
        Ok(out)
    }

    /// Copy with the response replaced (used to simulate from a model).
    pub fn with_response(&self, response: Vec<f64>) -> Result<Dataset> {
        Dataset::build(
            self.target,
            self.features.clone(),
            self.columns.clone(),
            self.exposure.clone(),
            response,
            self.weight.clone(),
            self.row_ids.clone(),
        )
    }

    /// Claim-count stratification key: 0, 1 or 2 (meaning two or more).
    pub fn claim_class(&self, i: usize) -> u8 {
        let count = match self.target {
            Target::Frequency => self.response[i],
            Target::Severity => self.weight[i],
        };
        if count >= 2.0 {
            2
        } else if count >= 1.0 {
            1
        } else {
            0
        }
    }

    /// Total of `y * w` and of `e * w`, the ingredients of the portfolio mean.
    pub fn weighted_mean_response(&self) -> f64 {
        match self.target {
            Target::Frequency => self.response.iter().sum::<f64>() / self.exposure.iter().sum::<f64>(),
            Target::Severity => crate::math::weighted_mean(&self.response, &self.weight),
        }
    }
}

// ---------------------------------------------------------------------------
// Normalisation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub feature: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sample standard deviation of each continuous feature, computed
/// on the training rows of one fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub fold: Option<usize>,
    pub entries: Vec<ScaleEntry>,
}

impl ScalingStats {
    pub fn compute(data: &Dataset, rows: &[usize], fold: Option<usize>) -> Result<Self> {
        let mut entries = Vec::new();
        for (j, f) in data.features().iter().enumerate() {
            if f.is_categorical() {
                continue;
            }
            let values: Vec<f64> = rows.iter().map(|&i| data.column(j)[i]).collect();
            let sd = sample_sd(&values);
            if !(sd > 0.0) {
                return Err(Error::ConstantColumn { column: f.name.clone() });
            }
            entries.push(ScaleEntry {
                feature: j,
                mean: mean(&values),
                sd,
            });
        }
        Ok(Self { fold, entries })
    }

    /// Stats over every row.
    pub fn compute_all(data: &Dataset) -> Result<Self> {
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        Self::compute(data, &rows, None)
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for e in &self.entries {
            row[e.feature] = (row[e.feature] - e.mean) / e.sd;
        }
    }

    pub fn invert_row(&self, row: &mut [f64]) {
        for e in &self.entries {
            row[e.feature] = row[e.feature] * e.sd + e.mean;
        }
    }
}

/// Replaces every continuous value by `(x - mean) / sd`.
pub fn normalize_continuous(data: &Dataset, stats: &ScalingStats) -> Result<Dataset> {
    let mut out = data.clone();
    for e in &stats.entries {
        if !(e.sd > 0.0) {
            return Err(Error::ConstantColumn {
                column: data.features()[e.feature].name.clone(),
            });
        }
        for v in out.columns[e.feature].iter_mut() {
            *v = (*v - e.mean) / e.sd;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// One-hot encoding

/// Dense one-hot matrix of all categorical features, one block per feature.
#[derive(Clone, Debug, PartialEq)]
pub struct OneHotMatrix {
    /// Block widths `L_j`.
    pub blocks: Vec<usize>,
    n_rows: usize,
    width: usize,
    /// Absolute column index of the hot entry, row-major `n x c`.
    hot: Vec<usize>,
}

impl OneHotMatrix {
    pub fn from_codes(blocks: Vec<usize>, codes: &[Vec<usize>]) -> Result<Self> {
        let width = blocks.iter().sum();
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut acc = 0;
        for &b in &blocks {
            offsets.push(acc);
            acc += b;
        }
        let mut hot = Vec::with_capacity(codes.len() * blocks.len());
        for (i, row) in codes.iter().enumerate() {
            if row.len() != blocks.len() {
                return Err(Error::LengthMismatch {
                    expected: blocks.len(),
                    actual: row.len(),
                });
            }
            for (j, &c) in row.iter().enumerate() {
                if c >= blocks[j] {
                    return Err(Error::Row {
                        row: i,
                        message: format!("level {c} outside block of width {}", blocks[j]),
                    });
                }
                hot.push(offsets[j] + c);
            }
        }
        Ok(Self {
            blocks,
            n_rows: codes.len(),
            width,
            hot,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Total width `sum L_j`.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Hot column indices of row `i`, one per block.
    pub fn hot(&self, i: usize) -> &[usize] {
        let c = self.blocks.len();
        &self.hot[i * c..(i + 1) * c]
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.width];
        for &h in self.hot(i) {
            row[h] = 1.0;
        }
        row
    }

    pub fn subset(&self, rows: &[usize]) -> OneHotMatrix {
        let c = self.blocks.len();
        let mut hot = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            hot.extend_from_slice(self.hot(i));
        }
        OneHotMatrix {
            blocks: self.blocks.clone(),
            n_rows: rows.len(),
            width: self.width,
            hot,
        }
        .with_checked_len(c)
    }

    fn with_checked_len(self, c: usize) -> Self {
        debug_assert_eq!(self.hot.len(), self.n_rows * c);
        self
    }

    /// Recovers level indices by block-wise argmax of a dense row.
    pub fn block_argmax(blocks: &[usize], dense: &[f64]) -> Vec<usize> {
        let mut out = Vec::with_capacity(blocks.len());
        let mut offset = 0;
        for &b in blocks {
            let block = &dense[offset..offset + b];
            let mut best = 0;
            for (h, v) in block.iter().enumerate() {
                if *v > block[best] {
                    best = h;
                }
            }
            out.push(best);
            offset += b;
        }
        out
    }
}

/// One-hot encodes the categorical features of `data`, in feature order.
pub fn one_hot(data: &Dataset) -> OneHotMatrix {
    let cats: Vec<usize> = (0..data.n_features())
        .filter(|&j| data.features()[j].is_categorical())
        .collect();
    let blocks: Vec<usize> = cats.iter().map(|&j| data.features()[j].n_levels()).collect();
    let codes: Vec<Vec<usize>> = (0..data.n_rows())
        .map(|i| cats.iter().map(|&j| data.column(j)[i] as usize).collect())
        .collect();
    // Dataset construction already validated the codes.
    OneHotMatrix::from_codes(blocks, &codes).expect("validated categorical codes")
}

// ---------------------------------------------------------------------------
// Severity view

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub row_id: usize,
    pub amount: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRow {
    pub row_id: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeverityView {
    pub dataset: Dataset,
    pub excluded: Vec<ExcludedRow>,
}

/// Restricts a frequency dataset to policies with at least one claim and
/// replaces the response by the average claim amount, weighted by the
/// number of amounts averaged.
///
/// Policies with a non-positive claim amount, or with claims but no amount
/// in the claims table, are left out and listed in `excluded`.
pub fn severity_view(freq: &Dataset, claims: &[Claim]) -> Result<SeverityView> {
    if freq.target() != Target::Frequency {
        return Err(Error::InvalidInput("severity view needs a frequency dataset".into()));
    }
    let mut by_row: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for c in claims {
        by_row.entry(c.row_id).or_default().push(c.amount);
    }
    let mut rows = Vec::new();
    let mut response = Vec::new();
    let mut weight = Vec::new();
    let mut excluded = Vec::new();
    for i in 0..freq.n_rows() {
        if freq.response()[i] < 1.0 {
            continue;
        }
        let id = freq.row_ids()[i];
        match by_row.get(&id) {
            None => excluded.push(ExcludedRow {
                row_id: id,
                reason: "claims reported but no claim amount".into(),
            }),
            Some(amounts) => {
                if let Some(bad) = amounts.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
                    excluded.push(ExcludedRow {
                        row_id: id,
                        reason: format!("non-positive claim amount {bad}"),
                    });
                } else {
                    rows.push(i);
                    response.push(mean(amounts));
                    weight.push(amounts.len() as f64);
                }
            }
        }
    }
    let sub = freq.subset(&rows);
    let dataset = Dataset::build(
        Target::Severity,
        sub.features,
        sub.columns,
        vec![1.0; rows.len()],
        response,
        weight,
        sub.row_ids,
    )?;
    Ok(SeverityView { dataset, excluded })
}

// ---------------------------------------------------------------------------
// Folds

/// Outer partition into `k` stratified subsets. Inner cross-validation for
/// outer fold `l` uses the remaining `k - 1` subsets as its folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Subset index of each row, `0..k`.
    pub assignment: Vec<usize>,
    /// Stratification key of each row after merging rare classes.
    pub key: Vec<u8>,
    pub warnings: Vec<String>,
}

impl FoldPlan {
    pub fn n_rows(&self) -> usize {
        self.assignment.len()
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.assignment[i] != fold).collect()
    }

    /// Inner label of a training row of outer fold `outer`: the position of
    /// its subset among the `k - 1` remaining subsets.
    pub fn inner_label(&self, outer: usize, row: usize) -> Option<usize> {
        let a = self.assignment[row];
        match a.cmp(&outer) {
            core::cmp::Ordering::Equal => None,
            core::cmp::Ordering::Less => Some(a),
            core::cmp::Ordering::Greater => Some(a - 1),
        }
    }

    /// `(validation subset, train rows, validation rows)` for each inner fold.
    pub fn inner_folds(&self, outer: usize) -> Vec<(usize, Vec<usize>, Vec<usize>)> {
        (0..self.k)
            .filter(|&v| v != outer)
            .map(|v| {
                let train = (0..self.n_rows())
                    .filter(|&i| self.assignment[i] != outer && self.assignment[i] != v)
                    .collect();
                (v, train, self.test_rows(v))
            })
            .collect()
    }

    /// Largest absolute gap between a subset's share of each claim class and
    /// the global share.
    pub fn max_class_share_gap(&self) -> f64 {
        let n = self.n_rows() as f64;
        let mut gap: f64 = 0.0;
        for class in 0..3u8 {
            let global = self.key.iter().filter(|&&c| c == class).count() as f64 / n;
            for f in 0..self.k {
                let rows: Vec<usize> = self.test_rows(f);
                if rows.is_empty() {
                    continue;
                }
                let share = rows.iter().filter(|&&i| self.key[i] == class).count() as f64 / rows.len() as f64;
                gap = gap.max((share - global).abs());
            }
        }
        gap
    }
}

/// Stratifies on the claim count capped at two. Classes smaller than `k` are
/// merged into the next lower class.
pub fn stratified_folds(data: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    let n = data.n_rows();
    if k < 2 {
        return Err(Error::InvalidInput("at least two folds are required".into()));
    }
    if n < k {
        return Err(Error::InvalidInput(format!("{n} rows cannot fill {k} folds")));
    }
    let mut key: Vec<u8> = (0..n).map(|i| data.claim_class(i)).collect();
    let mut warnings = Vec::new();
    for class in [2u8, 1] {
        let size = key.iter().filter(|&&c| c == class).count();
        if size > 0 && size < k {
            warnings.push(format!(
                "claim class {class} has {size} rows (< {k}); merged into class {}",
                class - 1
            ));
            for c in key.iter_mut().filter(|c| **c == class) {
                *c = class - 1;
            }
        }
    }
    let mut rng = rng::stream(seed, "folds", 0);
    let mut order = Vec::with_capacity(n);
    for class in 0..3u8 {
        let mut members: Vec<usize> = (0..n).filter(|&i| key[i] == class).collect();
        members.shuffle(&mut rng);
        order.extend(members);
    }
    // Dealing the class-sorted order round-robin balances both subset sizes
    // and per-class counts to within one row.
    let offset = rng.random_range(0..k);
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = (pos + offset) % k;
    }
    Ok(FoldPlan {
        k,
        seed,
        assignment,
        key,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Synthetic portfolios

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Effect {
    /// Adds `coef * (x - center)` to the linear predictor.
    Linear { freq: f64, sev: f64, center: f64 },
    /// Adds the coefficient when `x >= threshold`.
    Step { threshold: f64, freq: f64, sev: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousCovariate {
    pub name: String,
    pub low: f64,
    pub high: f64,
    /// Round draws to whole numbers (ages, vehicle years).
    pub integer: bool,
    pub effect: Effect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalCovariate {
    pub name: String,
    pub levels: Vec<String>,
    pub probs: Vec<f64>,
    pub freq_effects: Vec<f64>,
    pub sev_effects: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub freq_intercept: f64,
    pub sev_intercept: f64,
    /// Gamma shape of a single claim amount.
    pub sev_shape: f64,
    /// Exposure is uniform on `[min_exposure, 1]`; 1 gives full-year policies.
    pub min_exposure: f64,
    pub continuous: Vec<ContinuousCovariate>,
    pub categorical: Vec<CategoricalCovariate>,
}

impl SyntheticSpec {
    /// A small motor portfolio with log-linear effects.
    pub fn motor(n_rows: usize) -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        Self {
            n_rows,
            freq_intercept: -2.0,
            sev_intercept: 7.5,
            sev_shape: 2.0,
            min_exposure: 0.2,
            continuous: vec![
                ContinuousCovariate {
                    name: "ageph".into(),
                    low: 18.0,
                    high: 85.0,
                    integer: true,
                    effect: Effect::Linear {
                        freq: -0.015,
                        sev: 0.004,
                        center: 45.0,
                    },
                },
                ContinuousCovariate {
                    name: "power".into(),
                    low: 30.0,
                    high: 150.0,
                    integer: true,
                    effect: Effect::Linear {
                        freq: 0.004,
                        sev: 0.002,
                        center: 80.0,
                    },
                },
            ],
            categorical: vec![
                CategoricalCovariate {
                    name: "fuel".into(),
                    levels: s(&["gasoline", "diesel"]),
                    probs: vec![0.7, 0.3],
                    freq_effects: vec![0.0, 0.2],
                    sev_effects: vec![0.0, 0.1],
                },
                CategoricalCovariate {
                    name: "coverage".into(),
                    levels: s(&["tpl", "limited", "full"]),
                    probs: vec![0.5, 0.3, 0.2],
                    freq_effects: vec![0.0, -0.1, -0.25],
                    sev_effects: vec![0.0, 0.15, 0.3],
                },
                CategoricalCovariate {
                    name: "region".into(),
                    levels: s(&["north", "east", "south", "west", "centre"]),
                    probs: vec![0.25, 0.2, 0.2, 0.2, 0.15],
                    freq_effects: vec![0.0, 0.1, 0.25, -0.1, 0.35],
                    sev_effects: vec![0.0, 0.05, -0.05, 0.0, 0.1],
                },
            ],
        }
    }

    pub fn schema(&self) -> ColumnSchema {
        let mut cols: Vec<ColumnSpec> = self
            .continuous
            .iter()
            .map(|c| ColumnSpec::new(&c.name, ColumnKind::Continuous))
            .collect();
        for c in &self.categorical {
            cols.push(ColumnSpec {
                name: c.name.clone(),
                kind: ColumnKind::Categorical,
                levels: c.levels.clone(),
            });
        }
        cols.push(ColumnSpec::new("exposure", ColumnKind::Exposure));
        cols.push(ColumnSpec::new("nclaims", ColumnKind::Response));
        ColumnSchema::new(cols).expect("synthetic schema is valid")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPortfolio {
    pub frequency: Dataset,
    pub claims: Vec<Claim>,
    /// True expected claim count per unit exposure.
    pub true_rates: Vec<f64>,
    /// True expected claim amount.
    pub true_severities: Vec<f64>,
}

fn continuous_effect(effect: &Effect, x: f64) -> (f64, f64) {
    match *effect {
        Effect::Linear { freq, sev, center } => (freq * (x - center), sev * (x - center)),
        Effect::Step { threshold, freq, sev } => {
            if x >= threshold {
                (freq, sev)
            } else {
                (0.0, 0.0)
            }
        }
    }
}

/// Draws a portfolio with Poisson claim counts of mean `e * exp(eta)` and
/// gamma claim amounts of mean `exp(zeta)`.
pub fn generate_synthetic_portfolio(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticPortfolio> {
    for c in &spec.categorical {
        let l = c.levels.len();
        if c.probs.len() != l || c.freq_effects.len() != l || c.sev_effects.len() != l {
            return Err(Error::InvalidInput(format!(
                "categorical `{}` arrays differ in length",
                c.name
            )));
        }
    }
    if !(spec.sev_shape > 0.0) || !(spec.min_exposure > 0.0 && spec.min_exposure <= 1.0) {
        return Err(Error::InvalidInput(
            "sev_shape must be positive and min_exposure in (0, 1]".into(),
        ));
    }
    let n = spec.n_rows;
    let mut rng = rng::stream(seed, "synthetic", 0);
    let n_cont = spec.continuous.len();
    let n_feat = n_cont + spec.categorical.len();
    let mut columns = vec![Vec::with_capacity(n); n_feat];
    let mut exposure = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    let mut true_rates = Vec::with_capacity(n);
    let mut true_sev = Vec::with_capacity(n);
    let mut claims = Vec::new();
    for i in 0..n {
        let mut eta = spec.freq_intercept;
        let mut zeta = spec.sev_intercept;
        for (j, c) in spec.continuous.iter().enumerate() {
            let mut x = c.low + (c.high - c.low) * rng.random::<f64>();
            if c.integer {
                x = floor(x + 0.5);
            }
            let (df, ds) = continuous_effect(&c.effect, x);
            eta += df;
            zeta += ds;
            columns[j].push(x);
        }
        for (j, c) in spec.categorical.iter().enumerate() {
            let total: f64 = c.probs.iter().sum();
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut level = c.levels.len() - 1;
            for (h, p) in c.probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    level = h;
                    break;
                }
            }
            eta += c.freq_effects[level];
            zeta += c.sev_effects[level];
            columns[n_cont + j].push(level as f64);
        }
        let e = if spec.min_exposure >= 1.0 {
            1.0
        } else {
            spec.min_exposure + (1.0 - spec.min_exposure) * rng.random::<f64>()
        };
        let rate = exp(eta);
        let sev = exp(zeta);
        let lambda = e * rate;
        let count = if lambda > 0.0 {
            Poisson::new(lambda)
                .map_err(|_| Error::InvalidInput(format!("invalid Poisson mean {lambda}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
        let gamma = Gamma::new(spec.sev_shape, sev / spec.sev_shape)
            .map_err(|_| Error::InvalidInput(format!("invalid gamma mean {sev}")))?;
        for _ in 0..(count as usize) {
            claims.push(Claim {
                row_id: i,
                amount: gamma.sample(&mut rng),
            });
        }
        exposure.push(e);
        counts.push(count);
        true_rates.push(rate);
        true_sev.push(sev);
    }
    let features = spec.schema().features();
    let frequency = Dataset::frequency(features, columns, exposure, counts)?;
    Ok(SyntheticPortfolio {
        frequency,
        claims,
        true_rates,
        true_severities: true_sev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::frequency(
            vec![
                Feature::continuous("age"),
                Feature::categorical("fuel", &["g", "d", "e"]),
            ],
            vec![vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 2.0]],
            vec![1.0, 0.5, 1.0],
            vec![0.0, 1.0, 2.0],
        )
        .unwrap()
    }

    #[test]
    fn schema_invariants() {
        let resp = ColumnSpec::new("y", ColumnKind::Response);
        assert!(ColumnSchema::new(vec![ColumnSpec::new("x", ColumnKind::Continuous)]).is_err());
        assert!(ColumnSchema::new(vec![resp.clone(), ColumnSpec::new("y2", ColumnKind::Response)]).is_err());
        assert!(ColumnSchema::new(vec![resp.clone(), ColumnSpec::categorical("c", &[])]).is_err());
        assert!(ColumnSchema::new(vec![resp.clone(), ColumnSpec::categorical("c", &["a", "a"])]).is_err());
        assert!(ColumnSchema::new(vec![
            resp.clone(),
            ColumnSpec::new("e1", ColumnKind::Exposure),
            ColumnSpec::new("e2", ColumnKind::Exposure)
        ])
        .is_err());
        assert!(ColumnSchema::new(vec![resp, ColumnSpec::categorical("c", &["a", "b"])]).is_ok());
    }

    #[test]
    fn rejects_zero_exposure_with_row() {
        let err = Dataset::frequency(vec![], vec![], vec![1.0, 0.0], vec![0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Row { row: 1, .. }));
    }

    #[test]
    fn normalisation_hand_values() {
        let d = tiny();
        let stats = ScalingStats::compute_all(&d).unwrap();
        assert_eq!(stats.entries[0].mean, 2.0);
        assert_eq!(stats.entries[0].sd, 1.0);
        let z = normalize_continuous(&d, &stats).unwrap();
        assert_eq!(z.column(0), &[-1.0, 0.0, 1.0]);
        assert_eq!(z.column(1), d.column(1));
    }

    #[test]
    fn constant_column_is_an_error() {
        let d = Dataset::frequency(
            vec![Feature::continuous("k")],
            vec![vec![5.0, 5.0]],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        )
        .unwrap();
        assert!(matches!(
            ScalingStats::compute_all(&d),
            Err(Error::ConstantColumn { .. })
        ));
    }

    #[test]
    fn stats_ignore_test_rows() {
        let d = tiny();
        let train = [0usize, 1];
        let a = ScalingStats::compute(&d, &train, Some(2)).unwrap();
        let mut col = d.column(0).to_vec();
        col[2] = 1e9;
        let poisoned = d.with_column(0, col).unwrap();
        let b = ScalingStats::compute(&poisoned, &train, Some(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn one_hot_blocks() {
        let d = Dataset::frequency(
            vec![
                Feature::categorical("a", &["1", "2"]),
                Feature::categorical("b", &["1", "2", "3"]),
            ],
            vec![vec![0.0, 1.0], vec![2.0, 1.0]],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
        )
        .unwrap();
        let oh = one_hot(&d);
        assert_eq!(oh.width(), 5);
        assert_eq!(oh.dense_row(0), vec![1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(OneHotMatrix::block_argmax(&oh.blocks, &oh.dense_row(1)), vec![1, 1]);
        let single = one_hot(&tiny());
        assert_eq!(single.dense_row(1), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn severity_view_averages_and_filters() {
        let d = Dataset::frequency(vec![], vec![], vec![1.0; 5], vec![0.0, 2.0, 0.0, 1.0, 0.0]).unwrap();
        let claims = [
            Claim {
                row_id: 1,
                amount: 100.0,
            },
            Claim {
                row_id: 1,
                amount: 300.0,
            },
            Claim {
                row_id: 3,
                amount: 50.0,
            },
        ];
        let view = severity_view(&d, &claims).unwrap();
        assert_eq!(view.dataset.n_rows(), 2);
        assert_eq!(view.dataset.response(), &[200.0, 50.0]);
        assert_eq!(view.dataset.weight(), &[2.0, 1.0]);
        assert_eq!(view.dataset.row_ids(), &[1, 3]);
        assert!(view.excluded.is_empty());

        let bad = [
            Claim {
                row_id: 1,
                amount: -5.0,
            },
            Claim {
                row_id: 3,
                amount: 10.0,
            },
        ];
        let view = severity_view(&d, &bad).unwrap();
        assert_eq!(view.dataset.row_ids(), &[3]);
        assert_eq!(view.excluded.len(), 1);
        assert_eq!(view.excluded[0].row_id, 1);
    }

    #[test]
    fn folds_exact_allocation() {
        let claims: Vec<f64> = (0..600).map(|i| if i % 6 == 0 { 1.0 } else { 0.0 }).collect();
        let d = Dataset::frequency(vec![], vec![], vec![1.0; 600], claims).unwrap();
        let plan = stratified_folds(&d, 6, 11).unwrap();
        for f in 0..6 {
            let rows = plan.test_rows(f);
            assert_eq!(rows.len(), 100);
            let claimants = rows.iter().filter(|&&i| d.response()[i] > 0.0).count();
            assert!((16..=17).contains(&claimants), "fold {f}: {claimants}");
        }
        assert_eq!(plan, stratified_folds(&d, 6, 11).unwrap());
        let mut seen = vec![0; 600];
        for f in 0..6 {
            for i in plan.test_rows(f) {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn rare_class_is_merged() {
        let mut claims = vec![0.0; 60];
        claims[0] = 3.0;
        claims[1] = 1.0;
        for c in claims.iter_mut().skip(2).take(10) {
            *c = 1.0;
        }
        let d = Dataset::frequency(vec![], vec![], vec![1.0; 60], claims).unwrap();
        let plan = stratified_folds(&d, 6, 1).unwrap();
        assert_eq!(plan.warnings.len(), 1);
        assert_eq!(plan.key[0], 1);
    }

    #[test]
    fn inner_labels_skip_outer_fold() {
        let d = Dataset::frequency(vec![], vec![], vec![1.0; 60], vec![0.0; 60]).unwrap();
        let plan = stratified_folds(&d, 6, 3).unwrap();
        let inner = plan.inner_folds(2);
        assert_eq!(inner.len(), 5);
        for (v, train, valid) in &inner {
            assert_ne!(*v, 2);
            assert_eq!(train.len() + valid.len(), 50);
            for &i in valid {
                let label = plan.inner_label(2, i).unwrap();
                assert_eq!(label, if *v < 2 { *v } else { *v - 1 });
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec::motor(500);
        let a = generate_synthetic_portfolio(&spec, 5).unwrap();
        let b = generate_synthetic_portfolio(&spec, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.frequency, generate_synthetic_portfolio(&spec, 6).unwrap().frequency);
    }
}
