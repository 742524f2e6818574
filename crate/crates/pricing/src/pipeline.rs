//! The staged pricing pipeline.
//!
//! Artifacts under the output directory:
//!
//! ```text
//! run.json                               resolved configuration and tuning
//! data/{policies,claims,truth}.csv       synth: synthetic portfolio
//! data/schema.txt
//! ingest/{frequency,severity}.json       ingest: validated datasets
//! ingest/{losses,excluded}.csv
//! folds/plan.json, folds/folds.csv       folds: outer partition
//! train/<target>/fold_<l>/<model>/       train: model.json, tuning.json,
//!                                          predictions.csv, summary.json
//! train/<target>/losses.csv              per-fold out-of-sample deviance
//! train/<target>/oos/<model>.csv         out-of-sample prediction of every row
//! train/severity/tariff/<model>.csv      severity of every policy, out of sample
//! surrogate/<target>/...                 surrogate GLMs per fold
//! evaluate/<target>/...                  deviance, DM tests, Murphy, calibration
//! interpret/<target>/<model>/...         importance, partial dependence, Shapley
//! tariff/...                             premiums, balance, Gini matrix, Lorenz
//! ```
//!
//! Every training step of outer fold `l` sees only the rows outside fold `l`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use pricing_core::data::{
    generate_synthetic_portfolio, one_hot, severity_view, stratified_folds, Claim, ColumnSchema, Dataset, FoldPlan,
    SyntheticSpec, Target,
};
use pricing_core::embedding::{scale_encoder, select_dimension};
use pricing_core::evaluation::{
    calibration_curve, default_theta_grid, diebold_mariano, dominance, gamma_terms, murphy_curve, poisson_terms,
    prediction_histogram, BinSpec, DmResult, LossVector, MURPHY_FILL_POINTS,
};
use pricing_core::gbm::{deviance_on, fit_gbm, tune_gbm, GbmParams, GridScore};
use pricing_core::glm::{fit_benchmark_glm, BinningConfig};
use pricing_core::interpretation::{grid_label, partial_dependence, pd_grid, permutation_vip, shapley_mc, PD_GRID_CAP};
use pricing_core::neural::{
    random_grid, train_network, tune_network, Cann, CategoricalInput, InitialFit, NetworkSpec, SpecScore,
};
use pricing_core::rng::derive_seed;
use pricing_core::surrogate::{build_surrogate, SurrogateConfig};
use pricing_core::tariff::{balance_ratio, gini_matrix, lorenz_curve, minmax_select, risk_scores, technical_premium};
use pricing_core::{Model, Predictor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, Preset, RunConfig, TargetChoice, Tuning};
use crate::io::{
    load_claims, load_csv, read_csv, read_json, require, write_claims, write_csv, write_json, write_portfolio,
};
use crate::schema::{format_schema, load_schema};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Synth,
    Ingest,
    Folds,
    Train,
    Surrogate,
    Evaluate,
    Interpret,
    Tariff,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Folds => "folds",
            Stage::Train => "train",
            Stage::Surrogate => "surrogate",
            Stage::Evaluate => "evaluate",
            Stage::Interpret => "interpret",
            Stage::Tariff => "tariff",
            Stage::All => "all",
        }
    }
}

type NamedPredictions = Vec<(String, Vec<f64>)>;

pub const SURROGATE: &str = "surrogate";
pub const TRUTH: &str = "truth";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub row_id: usize,
    /// Outer fold that held the row out, counted from 1.
    pub fold: usize,
    pub exposure: f64,
    pub response: f64,
    pub weight: f64,
    pub prediction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub model: String,
    pub fold: usize,
    pub rows: usize,
    pub deviance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub row_id: usize,
    pub true_rate: f64,
    pub true_severity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyLoss {
    pub row_id: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowPrediction {
    pub row_id: usize,
    pub prediction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub dim: usize,
    /// Training cross-entropy per observation of each dimension tried.
    pub losses: Vec<(usize, f64)>,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub repetition: usize,
    pub seed: u64,
    pub epochs: usize,
    pub best_validation_loss: f64,
    pub test_deviance: f64,
    /// The repetition whose predictions are reported (lowest validation loss).
    pub canonical: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TuningReport {
    Untuned,
    Gbm {
        chosen: GbmParams,
        scores: Vec<GridScore>,
    },
    Network {
        chosen: NetworkSpec,
        scores: Vec<SpecScore>,
        embedding: Option<EmbeddingReport>,
        repetitions: Vec<RepetitionReport>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub fold: usize,
    pub rows: usize,
    /// Out-of-sample deviance, averaged over repetitions for networks.
    pub deviance: f64,
}

/// One model fitted on the training rows of one outer fold.
#[derive(Clone, Debug)]
pub struct FoldFit {
    pub kind: ModelKind,
    pub fold: usize,
    pub model: Model,
    pub report: TuningReport,
    pub summary: FitSummary,
    pub predictions: Vec<PredictionRow>,
}

/// Categorical input of the networks of one fold.
#[derive(Clone, Debug)]
pub struct FoldInput {
    pub input: CategoricalInput,
    pub report: Option<EmbeddingReport>,
}

/// Fits models fold by fold for one target.
pub struct Trainer<'a> {
    pub tuning: &'a Tuning,
    pub seed: u64,
    pub target: Target,
    pub data: &'a Dataset,
    pub plan: &'a FoldPlan,
}

fn target_index(t: Target) -> u64 {
    match t {
        Target::Frequency => 0,
        Target::Severity => 1,
    }
}

impl Trainer<'_> {
    fn fold_seed(&self, name: &str, fold: usize) -> u64 {
        derive_seed(self.seed, name, target_index(self.target) * 1000 + fold as u64)
    }

    pub fn train_data(&self, fold: usize) -> Dataset {
        self.data.subset(&self.plan.train_rows(fold))
    }

    pub fn test_data(&self, fold: usize) -> Dataset {
        self.data.subset(&self.plan.test_rows(fold))
    }

    pub fn grid(&self) -> Result<Vec<NetworkSpec>> {
        let seed = derive_seed(self.seed, "grid", target_index(self.target));
        Ok(random_grid(
            self.tuning.space(self.target),
            self.tuning.grid_size.max(1),
            seed,
        )?)
    }

    /// Autoencoder embedding trained on the fold's training rows, or one-hot
    /// input when embeddings are off or there is no categorical feature.
    pub fn input(&self, fold: usize) -> Result<FoldInput> {
        let one_hot_input = FoldInput {
            input: CategoricalInput::OneHot,
            report: None,
        };
        if !self.tuning.embedding || !self.data.features().iter().any(|f| f.is_categorical()) {
            return Ok(one_hot_input);
        }
        let x = one_hot(&self.train_data(fold));
        let choice = select_dimension(
            &x,
            &self.tuning.ae_dimensions,
            self.tuning.ae_threshold,
            self.fold_seed("autoencoder", fold),
            &self.tuning.ae,
        )?;
        if let Some(w) = &choice.warning {
            warn!("{} fold {fold}: {w}", self.target.as_str());
        }
        let report = EmbeddingReport {
            dim: choice.dim,
            losses: choice.losses.clone(),
            warning: choice.warning.clone(),
        };
        match scale_encoder(&choice.fit.model, &x) {
            Ok(encoder) => Ok(FoldInput {
                input: CategoricalInput::Embedding { encoder },
                report: Some(report),
            }),
            Err(e) => {
                warn!(
                    "{} fold {fold}: {e}; falling back to one-hot input",
                    self.target.as_str()
                );
                Ok(FoldInput {
                    report: Some(EmbeddingReport {
                        warning: Some(format!("{e}; one-hot input used")),
                        ..report
                    }),
                    ..one_hot_input
                })
            }
        }
    }

    fn predictions(&self, fold: usize, test: &Dataset, preds: &[f64]) -> Vec<PredictionRow> {
        (0..test.n_rows())
            .map(|i| PredictionRow {
                row_id: test.row_ids()[i],
                fold: fold + 1,
                exposure: test.exposure()[i],
                response: test.response()[i],
                weight: test.weight()[i],
                prediction: preds[i],
            })
            .collect()
    }

    /// Fits `kind` on the training rows of `fold` and predicts its test rows.
    /// CANNs take their initial model from `bases`, fitted on the same rows.
    pub fn fit(
        &self,
        fold: usize,
        kind: ModelKind,
        bases: &BTreeMap<ModelKind, Model>,
        input: &FoldInput,
    ) -> Result<FoldFit> {
        let train = self.train_data(fold);
        let test = self.test_data(fold);
        let (mut model, report, deviance) = match kind {
            ModelKind::Glm => {
                let m = Model::Glm(fit_benchmark_glm(&train, &BinningConfig::default())?);
                let d = deviance_on(&test, &m.predict(&test)?)?;
                (m, TuningReport::Untuned, d)
            }
            ModelKind::Gbm => {
                let base = GbmParams {
                    seed: self.fold_seed("gbm", fold),
                    ..self.tuning.gbm_base
                };
                let grid = &self.tuning.gbm_grid;
                let (params, scores) = if grid.n_trees.len() * grid.depth.len() > 1 {
                    tune_gbm(self.data, self.plan, fold, grid, &base)?
                } else {
                    let p = GbmParams {
                        n_trees: *grid.n_trees.first().ok_or(anyhow!("empty GBM tree grid"))?,
                        depth: *grid.depth.first().ok_or(anyhow!("empty GBM depth grid"))?,
                        ..base
                    };
                    (p, Vec::new())
                };
                let m = Model::Gbm(fit_gbm(&train, &params)?);
                let d = deviance_on(&test, &m.predict(&test)?)?;
                (m, TuningReport::Gbm { chosen: params, scores }, d)
            }
            ModelKind::Ffnn | ModelKind::Cann(..) => self.fit_network(fold, kind, bases, input, &train, &test)?,
        };
        model.set_fold(Some(fold));
        let preds = model.predict(&test)?;
        Ok(FoldFit {
            kind,
            fold,
            summary: FitSummary {
                model: kind.name().into(),
                fold,
                rows: test.n_rows(),
                deviance,
            },
            predictions: self.predictions(fold, &test, &preds),
            model,
            report,
        })
    }

    fn fit_network(
        &self,
        fold: usize,
        kind: ModelKind,
        bases: &BTreeMap<ModelKind, Model>,
        input: &FoldInput,
        train: &Dataset,
        test: &Dataset,
    ) -> Result<(Model, TuningReport, f64)> {
        let mode = kind.cann_mode();
        let base_model = match kind.base() {
            Some(b) => Some(
                bases
                    .get(&b)
                    .ok_or_else(|| anyhow!("{kind} needs the {b} model of fold {fold}"))?
                    .clone(),
            ),
            None => None,
        };
        let refit = |d: &Dataset| -> pricing_core::Result<Model> {
            match base_model.as_ref() {
                Some(Model::Gbm(g)) => fit_gbm(d, &g.params).map(Model::Gbm),
                _ => fit_benchmark_glm(d, &BinningConfig::default()).map(Model::Glm),
            }
        };
        let initial: Option<InitialFit> = if base_model.is_some() { Some(&refit) } else { None };
        let grid = self.grid()?;
        let (chosen, scores) = if grid.len() > 1 {
            tune_network(
                self.data,
                self.plan,
                fold,
                &grid,
                &input.input,
                mode,
                initial,
                &self.tuning.train,
            )?
        } else {
            (grid[0], Vec::new())
        };
        let mut reps = Vec::new();
        let mut best: Option<(f64, Model)> = None;
        for r in 0..self.tuning.repetitions.max(1) {
            let spec = NetworkSpec {
                seed: derive_seed(chosen.seed, "repetition", (fold * 64 + r) as u64),
                ..chosen
            };
            let cann = match (mode, &base_model) {
                (Some(mode), Some(m)) => Some(Cann {
                    mode,
                    initial: Box::new(m.clone()),
                }),
                _ => None,
            };
            let net = train_network(train, &spec, &input.input, cann, &self.tuning.train, r)?;
            let val = net.history.best_validation_loss;
            let test_deviance = deviance_on(test, &Predictor::predict(&net, test)?)?;
            reps.push(RepetitionReport {
                repetition: r,
                seed: spec.seed,
                epochs: net.history.epochs,
                best_validation_loss: val,
                test_deviance,
                canonical: false,
            });
            if best.as_ref().is_none_or(|(v, _)| val < *v) {
                best = Some((val, Model::Network(Box::new(net))));
            }
        }
        let (best_val, model) = best.ok_or_else(|| anyhow!("no repetitions"))?;
        if let Some(r) = reps.iter_mut().find(|r| r.best_validation_loss == best_val) {
            r.canonical = true;
        }
        let deviance = reps.iter().map(|r| r.test_deviance).sum::<f64>() / reps.len() as f64;
        Ok((
            model,
            TuningReport::Network {
                chosen,
                scores,
                embedding: input.report.clone(),
                repetitions: reps,
            },
            deviance,
        ))
    }
}

/// Fold plan of the severity rows, inherited from the policies they belong to.
pub fn severity_plan(freq_plan: &FoldPlan, sev: &Dataset) -> Result<FoldPlan> {
    let assignment = sev
        .row_ids()
        .iter()
        .map(|&id| freq_plan.assignment.get(id).copied())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| anyhow!("severity row id outside the frequency plan"))?;
    let key = sev.row_ids().iter().map(|&id| freq_plan.key[id]).collect();
    Ok(FoldPlan {
        k: freq_plan.k,
        seed: freq_plan.seed,
        assignment,
        key,
        warnings: Vec::new(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct IngestSummary {
    frequency_rows: Option<usize>,
    severity_rows: Option<usize>,
    excluded_rows: usize,
    total_exposure: Option<f64>,
    total_claims: Option<f64>,
    total_loss: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FoldRow {
    fold: usize,
    rows: usize,
    claims: f64,
    exposure: f64,
    claim_rate: f64,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    config: &'a RunConfig,
    tuning: &'a Tuning,
}

pub struct Pipeline {
    pub config: RunConfig,
    pub tuning: Tuning,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let tuning = config.tuning();
        Ok(Self { config, tuning })
    }

    fn out(&self) -> &Path {
        &self.config.out
    }

    fn path(&self, parts: &[&str]) -> PathBuf {
        let mut p = self.out().to_path_buf();
        for s in parts {
            p.push(s);
        }
        p
    }

    fn fold_dir(&self, target: Target, fold: usize, model: &str) -> PathBuf {
        self.path(&["train", target.as_str(), &format!("fold_{}", fold + 1), model])
    }

    pub fn targets(&self) -> Vec<Target> {
        self.config.target.targets()
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        fs::create_dir_all(self.out()).with_context(|| format!("creating {}", self.out().display()))?;
        write_json(
            &self.path(&["run.json"]),
            &RunRecord {
                config: &self.config,
                tuning: &self.tuning,
            },
        )?;
        let stages = match stage {
            Stage::All => {
                let mut s = Vec::new();
                if self.config.data.is_none() {
                    s.push(Stage::Synth);
                }
                s.extend([
                    Stage::Ingest,
                    Stage::Folds,
                    Stage::Train,
                    Stage::Surrogate,
                    Stage::Evaluate,
                    Stage::Interpret,
                ]);
                if self.config.target == TargetChoice::Both {
                    s.push(Stage::Tariff);
                }
                s
            }
            s => vec![s],
        };
        for s in stages {
            info!("stage {}", s.name());
            self.run_one(s).with_context(|| format!("stage `{}`", s.name()))?;
        }
        Ok(())
    }

    fn run_one(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Synth => self.synth(),
            Stage::Ingest => self.ingest(),
            Stage::Folds => self.folds(),
            Stage::Train => self.train(),
            Stage::Surrogate => self.surrogate(),
            Stage::Evaluate => self.evaluate(),
            Stage::Interpret => self.interpret(),
            Stage::Tariff => self.tariff(),
            Stage::All => self.run(Stage::All),
        }
    }

    // -----------------------------------------------------------------------
    // synth / ingest / folds

    pub fn synth(&self) -> Result<()> {
        if self.config.data.is_some() {
            bail!("the run is configured with [data]; synth only applies to synthetic runs");
        }
        let rows = self.config.synthetic.as_ref().map_or(6000, |s| s.rows);
        let spec = SyntheticSpec::motor(rows);
        let p = generate_synthetic_portfolio(&spec, derive_seed(self.config.seed, "synthetic", 0))?;
        let dir = self.path(&["data"]);
        fs::create_dir_all(&dir)?;
        let schema = spec.schema();
        fs::write(dir.join("schema.txt"), format_schema(&schema))?;
        write_portfolio(&dir.join("policies.csv"), &p.frequency, &schema)?;
        write_claims(&dir.join("claims.csv"), &p.claims)?;
        let truth: Vec<TruthRow> = (0..rows)
            .map(|i| TruthRow {
                row_id: i,
                true_rate: p.true_rates[i],
                true_severity: p.true_severities[i],
            })
            .collect();
        write_csv(&dir.join("truth.csv"), &truth)?;
        info!("synthetic portfolio: {rows} policies, {} claims", p.claims.len());
        Ok(())
    }

    fn input_paths(&self) -> Result<(PathBuf, PathBuf, Option<PathBuf>)> {
        match &self.config.data {
            Some(d) => Ok((d.policies.clone(), d.schema.clone(), d.claims.clone())),
            None => {
                let dir = self.path(&["data"]);
                for f in ["policies.csv", "schema.txt", "claims.csv"] {
                    require(&dir.join(f), "synth")?;
                }
                Ok((
                    dir.join("policies.csv"),
                    dir.join("schema.txt"),
                    Some(dir.join("claims.csv")),
                ))
            }
        }
    }

    pub fn ingest(&self) -> Result<()> {
        let (policies, schema_path, claims_path) = self.input_paths()?;
        let schema: ColumnSchema = load_schema(&schema_path)?;
        let data = load_csv(&policies, &schema)?;
        let dir = self.path(&["ingest"]);
        fs::create_dir_all(&dir)?;
        let mut summary = IngestSummary {
            frequency_rows: None,
            severity_rows: None,
            excluded_rows: 0,
            total_exposure: None,
            total_claims: None,
            total_loss: None,
        };
        match data.target() {
            Target::Severity => {
                summary.severity_rows = Some(data.n_rows());
                write_json(&dir.join("severity.json"), &data)?;
            }
            Target::Frequency => {
                summary.frequency_rows = Some(data.n_rows());
                summary.total_exposure = Some(data.exposure().iter().sum());
                summary.total_claims = Some(data.response().iter().sum());
                if let Some(cp) = claims_path {
                    let claims: Vec<Claim> = load_claims(&cp)?;
                    let view = severity_view(&data, &claims)?;
                    for e in &view.excluded {
                        warn!("policy {} left out of the severity data: {}", e.row_id, e.reason);
                    }
                    let mut loss = vec![0.0; data.n_rows()];
                    for c in &claims {
                        match loss.get_mut(c.row_id) {
                            Some(l) if c.amount > 0.0 => *l += c.amount,
                            Some(_) => {}
                            None => bail!("claims table refers to unknown row_id {}", c.row_id),
                        }
                    }
                    summary.total_loss = Some(loss.iter().sum());
                    summary.severity_rows = Some(view.dataset.n_rows());
                    summary.excluded_rows = view.excluded.len();
                    let losses: Vec<PolicyLoss> = loss
                        .iter()
                        .enumerate()
                        .map(|(row_id, &loss)| PolicyLoss { row_id, loss })
                        .collect();
                    write_csv(&dir.join("losses.csv"), &losses)?;
                    write_csv(&dir.join("excluded.csv"), &view.excluded)?;
                    write_json(&dir.join("severity.json"), &view.dataset)?;
                }
                write_json(&dir.join("frequency.json"), &data)?;
            }
        }
        write_json(&dir.join("summary.json"), &summary)?;
        Ok(())
    }

    pub fn dataset(&self, target: Target) -> Result<Dataset> {
        let d: Dataset = read_json(&self.path(&["ingest", &format!("{}.json", target.as_str())]), "ingest")?;
        // Re-validate what was read from disk.
        Ok(Dataset::build(
            d.target(),
            d.features().to_vec(),
            d.columns().to_vec(),
            d.exposure().to_vec(),
            d.response().to_vec(),
            d.weight().to_vec(),
            d.row_ids().to_vec(),
        )?)
    }

    fn primary_target(&self) -> Target {
        if self.path(&["ingest", "frequency.json"]).exists() {
            Target::Frequency
        } else {
            Target::Severity
        }
    }

    pub fn folds(&self) -> Result<()> {
        let target = self.primary_target();
        let data = self.dataset(target)?;
        let plan = stratified_folds(&data, self.config.folds, derive_seed(self.config.seed, "folds", 0))?;
        for w in &plan.warnings {
            warn!("{w}");
        }
        let rows: Vec<FoldRow> = (0..plan.k)
            .map(|f| {
                let r = plan.test_rows(f);
                let claims: f64 = r.iter().map(|&i| data.response()[i] * data.weight()[i]).sum();
                let exposure: f64 = r.iter().map(|&i| data.exposure()[i]).sum();
                FoldRow {
                    fold: f + 1,
                    rows: r.len(),
                    claims,
                    exposure,
                    claim_rate: claims / exposure,
                }
            })
            .collect();
        write_json(&self.path(&["folds", "plan.json"]), &plan)?;
        write_csv(&self.path(&["folds", "folds.csv"]), &rows)?;
        Ok(())
    }

    pub fn plan(&self, target: Target, data: &Dataset) -> Result<FoldPlan> {
        let plan: FoldPlan = read_json(&self.path(&["folds", "plan.json"]), "folds")?;
        if target == Target::Severity && self.primary_target() == Target::Frequency {
            severity_plan(&plan, data)
        } else {
            if plan.n_rows() != data.n_rows() {
                bail!(
                    "fold plan covers {} rows but the data has {}",
                    plan.n_rows(),
                    data.n_rows()
                );
            }
            Ok(plan)
        }
    }

    // -----------------------------------------------------------------------
    // train

    pub fn train(&self) -> Result<()> {
        for target in self.targets() {
            self.train_target(target)
                .with_context(|| format!("training {} models", target.as_str()))?;
        }
        Ok(())
    }

    fn load_fit(&self, target: Target, fold: usize, kind: ModelKind) -> Result<Option<FoldFit>> {
        let dir = self.fold_dir(target, fold, kind.name());
        if !dir.join("summary.json").exists() {
            return Ok(None);
        }
        Ok(Some(FoldFit {
            kind,
            fold,
            model: read_json(&dir.join("model.json"), "train")?,
            report: read_json(&dir.join("tuning.json"), "train")?,
            summary: read_json(&dir.join("summary.json"), "train")?,
            predictions: read_csv(&dir.join("predictions.csv"), "train")?,
        }))
    }

    fn save_fit(&self, target: Target, fit: &FoldFit) -> Result<()> {
        let dir = self.fold_dir(target, fit.fold, fit.kind.name());
        fs::create_dir_all(&dir)?;
        write_json(&dir.join("model.json"), &fit.model)?;
        write_json(&dir.join("tuning.json"), &fit.report)?;
        write_csv(&dir.join("predictions.csv"), &fit.predictions)?;
        // Written last: marks the fold as complete for resumed runs.
        write_json(&dir.join("summary.json"), &fit.summary)?;
        Ok(())
    }

    fn train_fold(&self, trainer: &Trainer, fold: usize) -> Result<Vec<FoldFit>> {
        let models = self.config.ordered_models();
        let mut bases = BTreeMap::new();
        let mut input: Option<FoldInput> = None;
        let mut fits = Vec::new();
        for kind in models {
            let fit = match self.load_fit(trainer.target, fold, kind)? {
                Some(f) => f,
                None => {
                    if kind.is_network() && input.is_none() {
                        input = Some(trainer.input(fold)?);
                    }
                    let placeholder = FoldInput {
                        input: CategoricalInput::OneHot,
                        report: None,
                    };
                    let f = trainer
                        .fit(fold, kind, &bases, input.as_ref().unwrap_or(&placeholder))
                        .with_context(|| format!("fold {} model {kind}", fold + 1))?;
                    self.save_fit(trainer.target, &f)?;
                    info!(
                        "{} fold {} {kind}: deviance {:.6}",
                        trainer.target.as_str(),
                        fold + 1,
                        f.summary.deviance
                    );
                    f
                }
            };
            if matches!(kind, ModelKind::Glm | ModelKind::Gbm) {
                bases.insert(kind, fit.model.clone());
            }
            fits.push(fit);
        }
        Ok(fits)
    }

    fn train_target(&self, target: Target) -> Result<()> {
        let data = self.dataset(target)?;
        let plan = self.plan(target, &data)?;
        let trainer = Trainer {
            tuning: &self.tuning,
            seed: self.config.seed,
            target,
            data: &data,
            plan: &plan,
        };
        let per_fold: Vec<Vec<FoldFit>> = (0..plan.k)
            .into_par_iter()
            .map(|fold| self.train_fold(&trainer, fold))
            .collect::<Result<_>>()?;
        let mut losses = Vec::new();
        let models = self.config.ordered_models();
        for (m, kind) in models.iter().enumerate() {
            let mut oos: Vec<PredictionRow> = Vec::new();
            for fits in &per_fold {
                let f = &fits[m];
                losses.push(LossRow {
                    model: kind.name().into(),
                    fold: f.fold + 1,
                    rows: f.summary.rows,
                    deviance: f.summary.deviance,
                });
                oos.extend(f.predictions.iter().cloned());
            }
            oos.sort_by_key(|r| r.row_id);
            write_csv(
                &self.path(&["train", target.as_str(), "oos", &format!("{kind}.csv")]),
                &oos,
            )?;
        }
        write_csv(&self.path(&["train", target.as_str(), "losses.csv"]), &losses)?;
        if target == Target::Severity && self.primary_target() == Target::Frequency {
            let freq = self.dataset(Target::Frequency)?;
            let fplan = self.plan(Target::Frequency, &freq)?;
            for (m, kind) in models.iter().enumerate() {
                let models: Vec<&Model> = per_fold.iter().map(|f| &f[m].model).collect();
                let rows = policy_predictions(&freq, &fplan, &models)?;
                write_csv(
                    &self.path(&["train", "severity", "tariff", &format!("{kind}.csv")]),
                    &rows,
                )?;
            }
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // surrogate

    fn surrogate_model(&self) -> ModelKind {
        if let Some(m) = self.config.surrogate.as_ref().and_then(|s| s.model) {
            return m;
        }
        let models = self.config.ordered_models();
        models
            .iter()
            .rev()
            .find(|m| m.is_network())
            .or(models.last())
            .copied()
            .unwrap_or(ModelKind::Glm)
    }

    fn surrogate_config(&self, fold: usize) -> SurrogateConfig {
        let mut c = self.tuning.surrogate.clone();
        if let Some(s) = &self.config.surrogate {
            if let Some(k) = s.k_max {
                c.k_max = k;
            }
            if let Some(p) = s.penalty {
                c.penalty = p;
            }
            if s.max_pd_rows.is_some() {
                c.max_pd_rows = s.max_pd_rows;
            }
        }
        c.seed = derive_seed(self.config.seed, "surrogate", fold as u64);
        c
    }

    pub fn surrogate(&self) -> Result<()> {
        let kind = self.surrogate_model();
        if !self.config.models.contains(&kind) {
            bail!("surrogate black box {kind} is not among the trained models");
        }
        for target in self.targets() {
            let data = self.dataset(target)?;
            let plan = self.plan(target, &data)?;
            let dir = self.path(&["surrogate", target.as_str()]);
            let results: Vec<(Model, Vec<PredictionRow>, LossRow)> = (0..plan.k)
                .into_par_iter()
                .map(|fold| -> Result<_> {
                    let black_box: Model =
                        read_json(&self.fold_dir(target, fold, kind.name()).join("model.json"), "train")?;
                    let train = data.subset(&plan.train_rows(fold));
                    let test = data.subset(&plan.test_rows(fold));
                    let s = build_surrogate(&black_box, &train, &self.surrogate_config(fold))
                        .with_context(|| format!("fold {}", fold + 1))?;
                    for w in &s.warnings {
                        warn!("{} surrogate fold {}: {w}", target.as_str(), fold + 1);
                    }
                    let fdir = dir.join(format!("fold_{}", fold + 1));
                    write_json(&fdir.join("surrogate.json"), &s)?;
                    if fold == 0 {
                        write_surrogate_tables(&dir, &s, &train)?;
                    }
                    let mut glm = s.glm.clone();
                    glm.fold = Some(fold);
                    let model = Model::Glm(glm);
                    let preds = model.predict(&test)?;
                    let rows: Vec<PredictionRow> = (0..test.n_rows())
                        .map(|i| PredictionRow {
                            row_id: test.row_ids()[i],
                            fold: fold + 1,
                            exposure: test.exposure()[i],
                            response: test.response()[i],
                            weight: test.weight()[i],
                            prediction: preds[i],
                        })
                        .collect();
                    let loss = LossRow {
                        model: SURROGATE.into(),
                        fold: fold + 1,
                        rows: test.n_rows(),
                        deviance: deviance_on(&test, &preds)?,
                    };
                    Ok((model, rows, loss))
                })
                .collect::<Result<_>>()?;
            let mut oos: Vec<PredictionRow> = results.iter().flat_map(|r| r.1.iter().cloned()).collect();
            oos.sort_by_key(|r| r.row_id);
            write_csv(&dir.join("oos.csv"), &oos)?;
            let losses: Vec<LossRow> = results.iter().map(|r| r.2.clone()).collect();
            write_csv(&dir.join("losses.csv"), &losses)?;
            write_json(&dir.join("black_box.json"), kind.name())?;
            if target == Target::Severity && self.primary_target() == Target::Frequency {
                let freq = self.dataset(Target::Frequency)?;
                let fplan = self.plan(Target::Frequency, &freq)?;
                let models: Vec<&Model> = results.iter().map(|r| &r.0).collect();
                write_csv(&dir.join("tariff.csv"), &policy_predictions(&freq, &fplan, &models)?)?;
            }
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // evaluate

    /// Out-of-sample predictions per model, aligned on row id: trained
    /// models, then the surrogate and the true model when available.
    fn oos_predictions(&self, target: Target) -> Result<(Vec<PredictionRow>, NamedPredictions)> {
        let mut base: Option<Vec<PredictionRow>> = None;
        let mut out = Vec::new();
        let mut add = |name: String, rows: Vec<PredictionRow>| -> Result<()> {
            match &base {
                None => base = Some(rows.clone()),
                Some(b) => {
                    if b.len() != rows.len() || b.iter().zip(&rows).any(|(x, y)| x.row_id != y.row_id) {
                        bail!("predictions of {name} do not cover the same rows");
                    }
                }
            }
            out.push((name, rows.iter().map(|r| r.prediction).collect()));
            Ok(())
        };
        for kind in self.config.ordered_models() {
            let p = self.path(&["train", target.as_str(), "oos", &format!("{kind}.csv")]);
            add(kind.name().into(), read_csv(&p, "train")?)?;
        }
        let s = self.path(&["surrogate", target.as_str(), "oos.csv"]);
        if s.exists() {
            add(SURROGATE.into(), read_csv(&s, "surrogate")?)?;
        }
        let base = base.ok_or_else(|| anyhow!("no trained models"))?;
        let truth_path = self.path(&["data", "truth.csv"]);
        if self.config.data.is_none() && truth_path.exists() {
            let truth: Vec<TruthRow> = read_csv(&truth_path, "synth")?;
            let t: Vec<f64> = base
                .iter()
                .map(|r| match target {
                    Target::Frequency => truth[r.row_id].true_rate,
                    Target::Severity => truth[r.row_id].true_severity,
                })
                .collect();
            out.push((TRUTH.into(), t));
        }
        Ok((base, out))
    }

    pub fn evaluate(&self) -> Result<()> {
        for target in self.targets() {
            self.evaluate_target(target)
                .with_context(|| format!("evaluating {} models", target.as_str()))?;
        }
        Ok(())
    }

    fn evaluate_target(&self, target: Target) -> Result<()> {
        let (rows, models) = self.oos_predictions(target)?;
        let dir = self.path(&["evaluate", target.as_str()]);
        let y: Vec<f64> = rows.iter().map(|r| r.response).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.exposure).collect();
        let w: Vec<f64> = rows.iter().map(|r| r.weight).collect();
        let losses: Vec<LossVector> = models
            .iter()
            .map(|(name, p)| {
                let values = match target {
                    Target::Frequency => poisson_terms(p, &y, &e)?,
                    Target::Severity => gamma_terms(p, &y, &w)?,
                };
                Ok(LossVector {
                    model: name.clone(),
                    fold: None,
                    values,
                })
            })
            .collect::<Result<_>>()?;

        #[derive(Serialize)]
        struct DevianceRow<'a> {
            model: &'a str,
            rows: usize,
            deviance: f64,
        }
        let dev: Vec<DevianceRow> = losses
            .iter()
            .map(|l| DevianceRow {
                model: &l.model,
                rows: l.values.len(),
                deviance: l.deviance(),
            })
            .collect();
        write_csv(&dir.join("deviance.csv"), &dev)?;

        let mut dm: Vec<DmResult> = Vec::new();
        for a in &losses {
            for b in &losses {
                if a.model != b.model {
                    dm.push(diebold_mariano(a, b)?);
                }
            }
        }
        write_json(&dir.join("dm.json"), &dm)?;

        // Frequency diagnostics compare expected claim counts with counts.
        let scale = |p: &[f64]| -> Vec<f64> {
            match target {
                Target::Frequency => p.iter().zip(&e).map(|(f, e)| f * e).collect(),
                Target::Severity => p.to_vec(),
            }
        };
        let scaled: Vec<(String, Vec<f64>)> = models.iter().map(|(n, p)| (n.clone(), scale(p))).collect();

        // Plot grid: distinct responses plus evenly spaced fill points.
        let all: Vec<f64> = scaled.iter().flat_map(|(_, p)| p.iter().copied()).collect();
        let mut plot_theta = default_theta_grid(&[], &y);
        let lo = all.iter().chain(&y).copied().fold(f64::INFINITY, f64::min);
        let hi = all.iter().chain(&y).copied().fold(f64::NEG_INFINITY, f64::max);
        plot_theta.extend((0..MURPHY_FILL_POINTS).map(|k| lo + (hi - lo) * k as f64 / (MURPHY_FILL_POINTS - 1) as f64));
        plot_theta.sort_by(f64::total_cmp);
        plot_theta.dedup();

        #[derive(Serialize)]
        struct MurphyRow<'a> {
            model: &'a str,
            theta: f64,
            score: f64,
        }
        let mut murphy = Vec::new();
        let mut calibration = Vec::new();
        let mut histogram = Vec::new();
        let width = ((hi - lo) / 50.0).max(f64::MIN_POSITIVE);

        #[derive(Serialize)]
        struct CalibrationRow<'a> {
            model: &'a str,
            bin: usize,
            lower: f64,
            upper: f64,
            mean_prediction: f64,
            mean_response: f64,
            count: usize,
            merged: bool,
        }
        #[derive(Serialize)]
        struct HistogramRow<'a> {
            model: &'a str,
            lower: f64,
            upper: f64,
            count: usize,
        }
        for (name, p) in &scaled {
            let c = murphy_curve(name, p, &y, &plot_theta)?;
            murphy.extend(c.theta.iter().zip(&c.score).map(|(&theta, &score)| MurphyRow {
                model: name,
                theta,
                score,
            }));
            let cal = calibration_curve(p, &y, &BinSpec::default())?;
            calibration.extend(cal.bins.iter().enumerate().map(|(bin, b)| CalibrationRow {
                model: name,
                bin,
                lower: b.lower,
                upper: b.upper,
                mean_prediction: b.mean_prediction,
                mean_response: b.mean_response,
                count: b.count,
                merged: b.merged,
            }));
            histogram.extend(prediction_histogram(p, width)?.into_iter().map(|h| HistogramRow {
                model: name,
                lower: h.lower,
                upper: h.upper,
                count: h.count,
            }));
        }
        write_csv(&dir.join("murphy.csv"), &murphy)?;
        write_csv(&dir.join("calibration.csv"), &calibration)?;
        write_csv(&dir.join("histogram.csv"), &histogram)?;

        // Dominance on the knots of each pair (both predictions and responses).
        #[derive(Serialize)]
        struct DominanceRow<'a> {
            model_a: &'a str,
            model_b: &'a str,
            verdict: pricing_core::evaluation::Dominance,
        }
        let mut dom = Vec::new();
        for (i, (na, pa)) in scaled.iter().enumerate() {
            for (nb, pb) in scaled.iter().skip(i + 1) {
                let both: Vec<f64> = pa.iter().chain(pb).copied().collect();
                let theta = default_theta_grid(&both, &y);
                let verdict = dominance(&murphy_curve(na, pa, &y, &theta)?, &murphy_curve(nb, pb, &y, &theta)?)?;
                dom.push(DominanceRow {
                    model_a: na,
                    model_b: nb,
                    verdict,
                });
            }
        }
        write_csv(&dir.join("dominance.csv"), &dom)?;
        Ok(())
    }

    // -----------------------------------------------------------------------
    // interpret

    pub fn interpret(&self) -> Result<()> {
        let models = if self.config.interpret.models.is_empty() {
            self.config.ordered_models()
        } else {
            self.config.interpret.models.clone()
        };
        let max_rows = self.config.interpret.max_rows.or(match self.config.preset {
            Preset::Desk => Some(5000),
            Preset::Paper => None,
        });
        for target in self.targets() {
            let data = self.dataset(target)?;
            let data = match max_rows {
                Some(m) if m < data.n_rows() => {
                    let mut r = pricing_core::rng::stream(self.config.seed, "interpret-rows", 0);
                    let mut rows = rand::seq::index::sample(&mut r, data.n_rows(), m).into_vec();
                    rows.sort_unstable();
                    data.subset(&rows)
                }
                _ => data,
            };
            for kind in &models {
                let model: Model = read_json(&self.fold_dir(target, 0, kind.name()).join("model.json"), "train")?;
                let dir = self.path(&["interpret", target.as_str(), kind.name()]);
                self.interpret_model(&model, kind.name(), &data, &dir)
                    .with_context(|| format!("interpreting {} {kind}", target.as_str()))?;
            }
        }
        Ok(())
    }

    fn interpret_model(&self, model: &Model, name: &str, data: &Dataset, dir: &Path) -> Result<()> {
        let seed = derive_seed(self.config.seed, "interpret", 0);
        let vip = permutation_vip(model, data, seed, 1)?;
        write_csv(&dir.join("vip.csv"), &vip)?;

        #[derive(Serialize)]
        struct PdRow<'a> {
            model: &'a str,
            variable: &'a str,
            value: f64,
            label: String,
            pd: f64,
        }
        let curves = (0..data.n_features())
            .into_par_iter()
            .map(|j| {
                let grid = pd_grid(data, j, PD_GRID_CAP)?;
                Ok(partial_dependence(model, name, data, j, &grid)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut pd = Vec::new();
        for c in &curves {
            for (&g, &v) in c.grid.iter().zip(&c.values) {
                pd.push(PdRow {
                    model: name,
                    variable: &c.variable,
                    value: g,
                    label: grid_label(data, c.feature, g),
                    pd: v,
                });
            }
        }
        write_csv(&dir.join("pd.csv"), &pd)?;

        #[derive(Serialize)]
        struct ShapRow<'a> {
            row_id: usize,
            variable: &'a str,
            contribution: f64,
            base: f64,
            prediction: f64,
            permutations: usize,
        }
        let mut shap = Vec::new();
        for i in 0..self.config.interpret.shapley_rows.min(data.n_rows()) {
            let s = shapley_mc(
                model,
                data,
                &data.row(i),
                self.config.interpret.shapley_permutations,
                derive_seed(seed, "shapley-row", i as u64),
            )?;
            for (j, &c) in s.contributions.iter().enumerate() {
                shap.push(ShapRow {
                    row_id: data.row_ids()[i],
                    variable: &data.features()[j].name,
                    contribution: c,
                    base: s.base,
                    prediction: s.prediction,
                    permutations: s.permutations,
                });
            }
        }
        write_csv(&dir.join("shapley.csv"), &shap)?;
        Ok(())
    }

    // -----------------------------------------------------------------------
    // tariff

    pub fn tariff(&self) -> Result<()> {
        if self.config.target != TargetChoice::Both {
            bail!("tariffs need both frequency and severity models (target = \"both\")");
        }
        let freq = self.dataset(Target::Frequency)?;
        let losses: Vec<PolicyLoss> = read_csv(&self.path(&["ingest", "losses.csv"]), "ingest")?;
        let loss: Vec<f64> = losses.iter().map(|l| l.loss).collect();
        if loss.len() != freq.n_rows() {
            bail!(
                "loss table covers {} policies but the portfolio has {}",
                loss.len(),
                freq.n_rows()
            );
        }
        let mut names = Vec::new();
        let mut premiums = Vec::new();
        let mut candidates: Vec<(String, PathBuf, PathBuf, &str)> = self
            .config
            .ordered_models()
            .iter()
            .map(|k| {
                (
                    k.name().to_string(),
                    self.path(&["train", "frequency", "oos", &format!("{k}.csv")]),
                    self.path(&["train", "severity", "tariff", &format!("{k}.csv")]),
                    "train",
                )
            })
            .collect();
        let sf = self.path(&["surrogate", "frequency", "oos.csv"]);
        let ss = self.path(&["surrogate", "severity", "tariff.csv"]);
        if sf.exists() && ss.exists() {
            candidates.push((SURROGATE.into(), sf, ss, "surrogate"));
        }
        for (name, fpath, spath, stage) in candidates {
            let f: Vec<PredictionRow> = read_csv(&fpath, stage)?;
            let s: Vec<RowPrediction> = read_csv(&spath, stage)?;
            if f.len() != freq.n_rows() || s.len() != freq.n_rows() {
                bail!("{name}: predictions do not cover every policy");
            }
            let counts: Vec<f64> = f.iter().map(|r| r.prediction * r.exposure).collect();
            let sev: Vec<f64> = s.iter().map(|r| r.prediction).collect();
            premiums.push(technical_premium(&counts, &sev)?);
            names.push(name);
        }
        let dir = self.path(&["tariff"]);
        fs::create_dir_all(&dir)?;

        let mut w = csv::Writer::from_path(dir.join("premiums.csv"))?;
        let mut header = vec!["row_id".to_string(), "exposure".into(), "loss".into()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..freq.n_rows() {
            let mut rec = vec![
                freq.row_ids()[i].to_string(),
                freq.exposure()[i].to_string(),
                loss[i].to_string(),
            ];
            rec.extend(premiums.iter().map(|p| p[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;

        #[derive(Serialize)]
        struct BalanceRow<'a> {
            model: &'a str,
            premium: f64,
            loss: f64,
            ratio: f64,
        }
        let total_loss: f64 = loss.iter().sum();
        let balance: Vec<BalanceRow> = names
            .iter()
            .zip(&premiums)
            .map(|(n, p)| {
                Ok(BalanceRow {
                    model: n,
                    premium: p.iter().sum(),
                    loss: total_loss,
                    ratio: balance_ratio(p, &loss)?,
                })
            })
            .collect::<Result<_>>()?;
        write_csv(&dir.join("balance.csv"), &balance)?;

        let g = gini_matrix(&names, &premiums, &loss)?;
        let mm = minmax_select(&g.values)?;
        let mut w = csv::Writer::from_path(dir.join("gini_matrix.csv"))?;
        let mut header = vec!["base".to_string()];
        header.extend(names.iter().cloned());
        header.extend(["row_max".into(), "minmax".into()]);
        w.write_record(&header)?;
        for (a, row) in g.values.iter().enumerate() {
            let mut rec = vec![names[a].clone()];
            rec.extend(row.iter().map(|v| v.map_or(String::new(), |x| x.to_string())));
            rec.push(mm.row_max[a].to_string());
            rec.push((a == mm.selected).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        write_json(
            &dir.join("minmax.json"),
            &serde_json::json!({
                "selected": names[mm.selected],
                "row_max": names.iter().cloned().zip(mm.row_max.iter().copied()).collect::<BTreeMap<_, _>>(),
                "tied": mm.tied.iter().map(|&i| names[i].clone()).collect::<Vec<_>>(),
            }),
        )?;

        #[derive(Serialize)]
        struct LorenzRow {
            risk_score: f64,
            loss_share: f64,
        }
        let s_grid: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        for (name, p) in names.iter().zip(&premiums) {
            let lc = lorenz_curve(&risk_scores(p), &loss, &s_grid)?;
            let rows: Vec<LorenzRow> = lc
                .into_iter()
                .map(|(risk_score, loss_share)| LorenzRow { risk_score, loss_share })
                .collect();
            write_csv(&dir.join("lorenz").join(format!("{name}.csv")), &rows)?;
        }
        info!("min-max tariff: {}", names[mm.selected]);
        Ok(())
    }
}

/// Predictions for every policy from the model of the fold holding it out.
fn policy_predictions(freq: &Dataset, plan: &FoldPlan, models: &[&Model]) -> Result<Vec<RowPrediction>> {
    let mut out = Vec::with_capacity(freq.n_rows());
    for (fold, model) in models.iter().enumerate() {
        let rows = plan.test_rows(fold);
        let preds = model.predict(&freq.subset(&rows))?;
        out.extend(rows.iter().zip(preds).map(|(&i, prediction)| RowPrediction {
            row_id: freq.row_ids()[i],
            prediction,
        }));
    }
    out.sort_by_key(|r| r.row_id);
    Ok(out)
}

fn write_surrogate_tables(dir: &Path, s: &pricing_core::surrogate::Surrogate, train: &Dataset) -> Result<()> {
    #[derive(Serialize)]
    struct RatingRow<'a> {
        factor: &'a str,
        level: &'a str,
        coefficient: f64,
        relativity: f64,
    }
    let table = s.glm.rating_table(train.features());
    let mut rows = vec![RatingRow {
        factor: "(base)",
        level: "",
        coefficient: table.base.ln(),
        relativity: table.base,
    }];
    for f in &table.factors {
        for l in &f.levels {
            rows.push(RatingRow {
                factor: &f.term,
                level: &l.label,
                coefficient: l.coefficient,
                relativity: l.relativity,
            });
        }
    }
    write_csv(&dir.join("rating_table.csv"), &rows)?;

    #[derive(Serialize)]
    struct SegmentRow<'a> {
        variable: &'a str,
        value: f64,
        label: String,
        pd: f64,
        weight: f64,
        group: usize,
    }
    let mut seg = Vec::new();
    for v in &s.segmentations {
        for (g, &x) in v.pd.grid.iter().enumerate() {
            seg.push(SegmentRow {
                variable: &v.variable,
                value: x,
                label: grid_label(train, v.feature, x),
                pd: v.pd.values[g],
                weight: v.weights[g],
                group: v.labels[g],
            });
        }
    }
    write_csv(&dir.join("segments.csv"), &seg)?;

    #[derive(Serialize)]
    struct CandidateRow {
        terms: String,
        bic: f64,
    }
    let cands: Vec<CandidateRow> = s
        .candidates
        .iter()
        .map(|c| CandidateRow {
            terms: if c.terms.is_empty() {
                "(intercept)".into()
            } else {
                c.terms.join(" + ")
            },
            bic: c.bic,
        })
        .collect();
    write_csv(&dir.join("candidates.csv"), &cands)?;
    write_csv(&dir.join("report.csv"), &s.report)?;
    Ok(())
}
