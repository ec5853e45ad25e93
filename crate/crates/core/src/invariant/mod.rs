//! Objectives and training for invariant linear predictors.
//!
//! A predictor is a weight vector `phi` composed with a scalar dummy
//! classifier fixed at 1.0; the dummy exists only so that invariance can
//! be expressed as a gradient-norm penalty at `w = 1.0`:
//!
//! ```text
//! sum_{e in E1} R^e(phi)  +  lambda * sum_{e in E2} pen^e(phi)
//! pen^e = |d/dw R^e(w * phi)|_{w=1}|   (or its square)
//! ```
//!
//! The split of environments between the risk sum `E1` and the penalty
//! sum `E2` selects the method: both equal to all training environments
//! is the gradient-penalty invariance objective; both restricted to a
//! partition is the partitioned relaxation; risk on everything with the
//! penalty restricted is the conditioned relaxation; an empty penalty
//! set (or `lambda = 0`) is plain ERM.

mod adam;
mod eval;
mod objective;
mod train;

pub use adam::AdamParams;
pub use eval::{conditional_risk, evaluate, suppression_ratios};
pub use objective::{
    grad_objective, grad_penalty_closed_form, grad_penalty_empirical, mse_risk, objective,
    objective_and_grad,
};
pub use train::{train, TrainResult};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// The linear representation-as-predictor. The scalar dummy classifier is
/// fixed at [`Predictor::DUMMY_CLASSIFIER`] and never trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PredictorRepr", try_from = "PredictorRepr")]
pub struct Predictor {
    phi: Array1<f64>,
}

#[derive(Serialize, Deserialize, Clone)]
struct PredictorRepr {
    phi: Vec<f64>,
}

impl From<Predictor> for PredictorRepr {
    fn from(p: Predictor) -> Self {
        PredictorRepr { phi: p.phi.to_vec() }
    }
}

impl TryFrom<PredictorRepr> for Predictor {
    type Error = Error;

    fn try_from(repr: PredictorRepr) -> Result<Self> {
        Predictor::new(Array1::from_vec(repr.phi))
    }
}

impl Predictor {
    pub const DUMMY_CLASSIFIER: f64 = 1.0;

    pub fn new(phi: Array1<f64>) -> Result<Self> {
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("predictor weights must be finite".into()));
        }
        Ok(Predictor { phi })
    }

    pub fn zeros(dim: usize) -> Self {
        Predictor {
            phi: Array1::zeros(dim),
        }
    }

    pub fn from_slice(phi: &[f64]) -> Result<Self> {
        Predictor::new(Array1::from_vec(phi.to_vec()))
    }

    pub fn phi(&self) -> &Array1<f64> {
        &self.phi
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    /// `X phi * w_dummy`, row-wise.
    pub fn predict(&self, x: &Array2<f64>) -> Array1<f64> {
        x.dot(&self.phi) * Self::DUMMY_CLASSIFIER
    }
}

/// Whether the penalty is the gradient magnitude or its square. The
/// squared form is smooth at the constraint surface and is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyForm {
    #[default]
    SquaredNorm,
    Norm,
}

/// Full-batch training schedule. Before `anneal_iters` the penalty weight
/// is held at 1.0; afterwards it jumps to `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub anneal_iters: usize,
    pub learning_rate: f64,
    pub adam: AdamParams,
    pub seed: u64,
    pub penalty_form: PenaltyForm,
    /// Record `(iteration, phi)` every this many iterations; 0 disables.
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e2,
            iterations: 4000,
            anneal_iters: 2000,
            learning_rate: 1e-3,
            adam: AdamParams::default(),
            seed: 0,
            penalty_form: PenaltyForm::default(),
            snapshot_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.anneal_iters > self.iterations {
            return Err(Error::InvalidParameter(format!(
                "anneal_iters {} exceeds iterations {}",
                self.anneal_iters, self.iterations
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-environment MSE plus the two scalar summaries used throughout the
/// result tables: the unweighted mean and the worst group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub per_env: BTreeMap<String, f64>,
    pub avg: f64,
    pub worst_group: f64,
}

impl RiskReport {
    pub fn from_per_env(per_env: BTreeMap<String, f64>) -> Result<Self> {
        if per_env.is_empty() {
            return Err(Error::EmptyInput("risk report needs at least one environment"));
        }
        let avg = per_env.values().sum::<f64>() / per_env.len() as f64;
        let worst_group = per_env.values().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(RiskReport {
            per_env,
            avg,
            worst_group,
        })
    }
}

/// The four objective variants the harness trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Erm,
    Irm,
    PirmPart,
    PirmCond,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Erm => "erm",
            ModelKind::Irm => "irm",
            ModelKind::PirmPart => "pirm-part",
            ModelKind::PirmCond => "pirm-cond",
        };
        f.write_str(s)
    }
}

impl ModelKind {
    pub fn needs_partition(self) -> bool {
        matches!(self, ModelKind::PirmPart | ModelKind::PirmCond)
    }
}
