//! Run configuration (TOML) and the tuning presets.
//!
//! ```toml
//! seed = 2024
//! preset = "desk"
//! out = "runs/motor"
//! target = "both"
//! models = ["glm", "gbm", "ffnn", "cann_gbm_flex"]
//!
//! [data]
//! policies = "policies.csv"
//! schema = "schema.txt"
//! claims = "claims.csv"
//!
//! [tuning]
//! grid_size = 8
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Without a `[data]` section the run uses a synthetic portfolio (see
//! `[synthetic]`), written by the `synth` stage.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use pricing_core::data::Target;
use pricing_core::embedding::{AeConfig, DEFAULT_CE_THRESHOLD, DEFAULT_DIMENSIONS};
use pricing_core::gbm::{GbmGrid, GbmParams};
use pricing_core::neural::{CannMode, SearchSpace, TrainConfig};
use pricing_core::surrogate::SurrogateConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Small grids and epoch caps for a laptop.
    Desk,
    /// Full-size grids and epoch caps.
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetChoice {
    Frequency,
    Severity,
    Both,
}

impl TargetChoice {
    pub fn targets(self) -> Vec<Target> {
        match self {
            Self::Frequency => vec![Target::Frequency],
            Self::Severity => vec![Target::Severity],
            Self::Both => vec![Target::Frequency, Target::Severity],
        }
    }
}

/// Base model of a combined actuarial network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Base {
    Glm,
    Gbm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Glm,
    Gbm,
    Ffnn,
    Cann(Base, bool),
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Glm,
        ModelKind::Gbm,
        ModelKind::Ffnn,
        ModelKind::Cann(Base::Glm, false),
        ModelKind::Cann(Base::Glm, true),
        ModelKind::Cann(Base::Gbm, false),
        ModelKind::Cann(Base::Gbm, true),
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Glm => "glm",
            ModelKind::Gbm => "gbm",
            ModelKind::Ffnn => "ffnn",
            ModelKind::Cann(Base::Glm, false) => "cann_glm_fixed",
            ModelKind::Cann(Base::Glm, true) => "cann_glm_flex",
            ModelKind::Cann(Base::Gbm, false) => "cann_gbm_fixed",
            ModelKind::Cann(Base::Gbm, true) => "cann_gbm_flex",
        }
    }

    pub fn is_network(self) -> bool {
        matches!(self, ModelKind::Ffnn | ModelKind::Cann(..))
    }

    pub fn cann_mode(self) -> Option<CannMode> {
        match self {
            ModelKind::Cann(_, true) => Some(CannMode::Flexible),
            ModelKind::Cann(_, false) => Some(CannMode::Fixed),
            _ => None,
        }
    }

    pub fn base(self) -> Option<ModelKind> {
        match self {
            ModelKind::Cann(Base::Glm, _) => Some(ModelKind::Glm),
            ModelKind::Cann(Base::Gbm, _) => Some(ModelKind::Gbm),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match ModelKind::ALL.iter().find(|m| m.name() == s) {
            Some(m) => Ok(*m),
            None => bail!(
                "unknown model `{s}`; expected one of {}",
                ModelKind::ALL.map(|m| m.name()).join(", ")
            ),
        }
    }
}

impl Serialize for ModelKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub policies: PathBuf,
    pub schema: PathBuf,
    /// Claims table `(row_id, amount)`; needed for severity and tariffs.
    pub claims: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub rows: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { rows: 6000 }
    }
}

/// Overrides of the preset values; unset fields keep the preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningOverrides {
    pub grid_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub repetitions: Option<usize>,
    pub gbm_trees: Option<Vec<usize>>,
    pub gbm_depths: Option<Vec<usize>>,
    pub gbm_shrinkage: Option<f64>,
    pub ae_dimensions: Option<Vec<usize>>,
    pub ae_max_epochs: Option<usize>,
    /// Use autoencoder embeddings for categorical inputs of the networks.
    pub embedding: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpretConfig {
    /// Models to interpret; all trained models when empty.
    #[serde(default)]
    pub models: Vec<ModelKind>,
    /// Policies explained with Shapley values.
    #[serde(default = "default_shapley_rows")]
    pub shapley_rows: usize,
    #[serde(default = "default_permutations")]
    pub shapley_permutations: usize,
    /// Rows used for importance and partial dependence (a seeded subsample).
    #[serde(default)]
    pub max_rows: Option<usize>,
}

fn default_shapley_rows() -> usize {
    3
}

fn default_permutations() -> usize {
    50
}

impl Default for InterpretConfig {
    fn default() -> Self {
        Self {
            models: Vec::new(),
            shapley_rows: default_shapley_rows(),
            shapley_permutations: default_permutations(),
            max_rows: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSection {
    /// Black box to distil; the first network model trained when unset.
    pub model: Option<ModelKind>,
    pub k_max: Option<usize>,
    pub penalty: Option<f64>,
    pub max_pd_rows: Option<usize>,
}

fn default_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_folds() -> usize {
    6
}

fn default_seed() -> u64 {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("pricing-run")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub preset: Preset,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_target")]
    pub target: TargetChoice,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub data: Option<DataPaths>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub tuning: TuningOverrides,
    #[serde(default)]
    pub interpret: InterpretConfig,
    #[serde(default)]
    pub surrogate: Option<SurrogateSection>,
}

fn default_target() -> TargetChoice {
    TargetChoice::Both
}

impl RunConfig {
    /// A synthetic run with default settings.
    pub fn synthetic(preset: Preset, rows: usize, out: PathBuf) -> Self {
        Self {
            seed: default_seed(),
            preset,
            out,
            target: TargetChoice::Both,
            models: default_models(),
            folds: default_folds(),
            data: None,
            synthetic: Some(SyntheticConfig { rows }),
            tuning: TuningOverrides::default(),
            interpret: InterpretConfig::default(),
            surrogate: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.out);
        if let Some(d) = cfg.data.as_mut() {
            resolve(&mut d.policies);
            resolve(&mut d.schema);
            if let Some(c) = d.claims.as_mut() {
                resolve(c);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 3 {
            bail!("at least 3 outer folds are needed (inner tuning uses the remaining folds)");
        }
        if self.models.is_empty() {
            bail!("no models selected");
        }
        if let Some(d) = &self.data {
            for p in [&d.policies, &d.schema].into_iter().chain(d.claims.as_ref()) {
                if !p.exists() {
                    bail!("configured path {} does not exist", p.display());
                }
            }
            if self.target != TargetChoice::Frequency && d.claims.is_none() {
                bail!("severity models need a claims table ([data] claims)");
            }
        }
        for m in &self.models {
            if let Some(base) = m.base() {
                if !self.models.contains(&base) {
                    bail!("model {m} needs its initial model {base} in `models`");
                }
            }
        }
        Ok(())
    }

    /// Models in training order: bases before the networks that use them.
    pub fn ordered_models(&self) -> Vec<ModelKind> {
        let mut m = self.models.clone();
        m.sort();
        m.dedup();
        m
    }

    pub fn tuning(&self) -> Tuning {
        Tuning::resolve(self.preset, &self.tuning, self.seed)
    }
}

/// Fully resolved tuning settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub grid_size: usize,
    pub repetitions: usize,
    pub train: TrainConfig,
    pub frequency_space: SearchSpace,
    pub severity_space: SearchSpace,
    pub gbm_grid: GbmGrid,
    pub gbm_base: GbmParams,
    pub embedding: bool,
    pub ae_dimensions: Vec<usize>,
    pub ae_threshold: f64,
    pub ae: AeConfig,
    pub surrogate: SurrogateConfig,
}

impl Tuning {
    pub fn resolve(preset: Preset, o: &TuningOverrides, seed: u64) -> Self {
        let mut t = match preset {
            Preset::Paper => Tuning {
                grid_size: 40,
                repetitions: 3,
                train: TrainConfig::default(),
                frequency_space: SearchSpace::frequency(),
                severity_space: SearchSpace::severity(),
                gbm_grid: GbmGrid::paper(),
                gbm_base: GbmParams::default(),
                embedding: true,
                ae_dimensions: DEFAULT_DIMENSIONS.to_vec(),
                ae_threshold: DEFAULT_CE_THRESHOLD,
                ae: AeConfig::default(),
                surrogate: SurrogateConfig::default(),
            },
            Preset::Desk => Tuning {
                grid_size: 6,
                repetitions: 3,
                train: TrainConfig {
                    max_epochs: 150,
                    patience: 10,
                    ..TrainConfig::default()
                },
                frequency_space: SearchSpace::desk_frequency(),
                severity_space: SearchSpace::desk_severity(),
                gbm_grid: GbmGrid::desk(),
                gbm_base: GbmParams {
                    shrinkage: 0.05,
                    ..GbmParams::default()
                },
                embedding: true,
                ae_dimensions: DEFAULT_DIMENSIONS.to_vec(),
                ae_threshold: DEFAULT_CE_THRESHOLD,
                ae: AeConfig {
                    max_epochs: 200,
                    patience: 10,
                    ..AeConfig::default()
                },
                surrogate: SurrogateConfig {
                    max_pd_rows: Some(2000),
                    ..SurrogateConfig::default()
                },
            },
        };
        if let Some(v) = o.grid_size {
            t.grid_size = v;
        }
        if let Some(v) = o.max_epochs {
            t.train.max_epochs = v;
        }
        if let Some(v) = o.patience {
            t.train.patience = v;
        }
        if let Some(v) = o.repetitions {
            t.repetitions = v;
        }
        if let Some(v) = &o.gbm_trees {
            t.gbm_grid.n_trees = v.clone();
        }
        if let Some(v) = &o.gbm_depths {
            t.gbm_grid.depth = v.clone();
        }
        if let Some(v) = o.gbm_shrinkage {
            t.gbm_base.shrinkage = v;
        }
        if let Some(v) = &o.ae_dimensions {
            t.ae_dimensions = v.clone();
        }
        if let Some(v) = o.ae_max_epochs {
            t.ae.max_epochs = v;
        }
        if let Some(v) = o.embedding {
            t.embedding = v;
        }
        t.gbm_base.seed = seed;
        t.surrogate.seed = seed;
        t
    }

    pub fn space(&self, target: Target) -> &SearchSpace {
        match target {
            Target::Frequency => &self.frequency_space,
            Target::Severity => &self.severity_space,
        }
    }
}
