//! Experiment orchestration: recipe configs, environment splits per model
//! variant, tabular ingestion, train-domain validation, and report
//! emission.

pub mod recipes;
mod report;
mod tabular;
mod validation;

pub use recipes::{
    run_recipe, Example1Params, GammaCheckParams, Lemma1Params, RecipeData, SuppressionParams,
    TabularParams, Theorem1McParams,
};
pub use report::{
    write_single_result_csv,
    write_predictor_json, write_ratio_trajectories_csv, write_report_json, write_results_csv,
    write_traces_csv, ReportMeta, ResultRow, SeedAggregate,
};
pub use tabular::{ingest_tabular, Normalization, TabularConfig, TabularEnvSet};
pub use validation::train_domain_validation;

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::envgen::{Dataset, EnvId};
use crate::error::{Error, Result};
use crate::invariant::{ModelKind, PenaltyForm, TrainConfig};

/// Maps a model variant onto its `(risk, penalty)` environment split.
///
/// - `erm`: risk on everything, no penalty terms;
/// - `irm`: risk and penalty on everything;
/// - `pirm-part`: risk and penalty on the partition members;
/// - `pirm-cond`: risk on everything, penalty on the members.
pub fn model_env_split<'a>(
    model: ModelKind,
    all: &'a [Dataset],
    partition: Option<&BTreeSet<EnvId>>,
) -> Result<(Vec<&'a Dataset>, Vec<&'a Dataset>)> {
    if all.is_empty() {
        return Err(Error::EmptyInput("no training environments"));
    }
    let everything = || all.iter().collect::<Vec<_>>();
    let members = |ids: &BTreeSet<EnvId>| -> Result<Vec<&'a Dataset>> {
        let selected: Vec<&Dataset> = all.iter().filter(|d| ids.contains(d.env_id())).collect();
        if selected.is_empty() {
            return Err(Error::InvalidParameter(
                "partition does not intersect the training environments".into(),
            ));
        }
        Ok(selected)
    };
    fn need<'p>(
        p: Option<&'p BTreeSet<EnvId>>,
        model: ModelKind,
    ) -> Result<&'p BTreeSet<EnvId>> {
        p.ok_or_else(|| Error::InvalidParameter(format!("model {model} requires a partition")))
    }
    match model {
        ModelKind::Erm => Ok((everything(), Vec::new())),
        ModelKind::Irm => Ok((everything(), everything())),
        ModelKind::PirmPart => {
            let m = members(need(partition, model)?)?;
            Ok((m.clone(), m))
        }
        ModelKind::PirmCond => {
            let m = members(need(partition, model)?)?;
            Ok((everything(), m))
        }
    }
}

/// Optional overrides applied on top of a recipe's built-in training
/// defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOverrides {
    pub lambda: Option<f64>,
    pub iterations: Option<usize>,
    pub anneal_iters: Option<usize>,
    pub learning_rate: Option<f64>,
    pub penalty_form: Option<PenaltyForm>,
}

impl TrainOverrides {
    pub fn apply(&self, mut base: TrainConfig) -> TrainConfig {
        if let Some(v) = self.lambda {
            base.lambda = v;
        }
        if let Some(v) = self.iterations {
            base.iterations = v;
        }
        if let Some(v) = self.anneal_iters {
            base.anneal_iters = v;
        }
        if let Some(v) = self.learning_rate {
            base.learning_rate = v;
        }
        if let Some(v) = self.penalty_form {
            base.penalty_form = v;
        }
        base
    }
}

/// Which experiment to run, with its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "kebab-case")]
pub enum RecipeConfig {
    Lemma1(Lemma1Params),
    Example1(Example1Params),
    Suppression(SuppressionParams),
    Theorem1Mc(Theorem1McParams),
    GammaCheck(GammaCheckParams),
    Tabular(TabularParams),
}

impl RecipeConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RecipeConfig::Lemma1(_) => "lemma1",
            RecipeConfig::Example1(_) => "example1",
            RecipeConfig::Suppression(_) => "suppression",
            RecipeConfig::Theorem1Mc(_) => "theorem1-mc",
            RecipeConfig::GammaCheck(_) => "gamma-check",
            RecipeConfig::Tabular(_) => "tabular",
        }
    }
}

fn default_seeds() -> usize {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A full experiment: recipe, seeds, output directory, and training
/// overrides. Loadable from JSON; the CLI layers flag overrides on top.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub recipe: RecipeConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub train: TrainOverrides,
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::InvalidParameter("seeds must be >= 1".into()));
        }
        match &self.recipe {
            RecipeConfig::Lemma1(p) => p.validate(),
            RecipeConfig::Example1(p) => p.validate(),
            RecipeConfig::Suppression(p) => p.validate(),
            RecipeConfig::Theorem1Mc(p) => p.validate(),
            RecipeConfig::GammaCheck(p) => p.validate(),
            RecipeConfig::Tabular(p) => p.validate(),
        }
    }
}
