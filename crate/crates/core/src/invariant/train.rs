//! Full-batch training loop with penalty annealing.

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use super::adam::Adam;
use super::objective::{objective, objective_and_grad};
use super::{Predictor, TrainConfig};
use crate::envgen::Dataset;
use crate::error::{Error, Result};
use crate::rng::substream;

const TAG_INIT: u64 = 0x7121;
const INIT_SCALE: f64 = 0.1;

/// Final predictor plus the objective trace (one value per iteration,
/// then the final value) and any requested weight snapshots.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub predictor: Predictor,
    pub objective_trace: Vec<f64>,
    pub snapshots: Vec<(usize, Vec<f64>)>,
}

/// Runs bias-corrected Adam on the combined objective. The penalty
/// weight is 1.0 for the first `anneal_iters` iterations, then
/// `config.lambda`. Deterministic given the seed; a non-finite objective
/// aborts with the trace attached.
pub fn train(
    config: &TrainConfig,
    risk_envs: &[&Dataset],
    penalty_envs: &[&Dataset],
) -> Result<TrainResult> {
    config.validate()?;
    let first = risk_envs
        .first()
        .ok_or(Error::EmptyInput("train needs at least one risk environment"))?;
    let dim = first.dim();

    let mut init_rng = substream(config.seed, &[TAG_INIT]);
    let phi0 =
        Array1::from_shape_simple_fn(dim, || INIT_SCALE * init_rng.sample::<f64, _>(StandardNormal));
    let mut pred = Predictor::new(phi0)?;

    let mut adam = Adam::new(dim, config.learning_rate, config.adam);
    let mut trace = Vec::with_capacity(config.iterations + 1);
    let mut snapshots = Vec::new();

    for iter in 0..config.iterations {
        let lambda_eff = if iter < config.anneal_iters {
            1.0
        } else {
            config.lambda
        };
        let (value, grad) =
            objective_and_grad(&pred, risk_envs, penalty_envs, lambda_eff, config.penalty_form)?;
        if !value.is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                trace,
            });
        }
        trace.push(value);
        if config.snapshot_every > 0 && iter % config.snapshot_every == 0 {
            snapshots.push((iter, pred.phi().to_vec()));
        }
        let mut phi = pred.phi().clone();
        adam.step(&mut phi, &grad);
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: iter,
                trace,
            });
        }
        pred = Predictor::new(phi)?;
    }

    let final_value = objective(
        &pred,
        risk_envs,
        penalty_envs,
        config.lambda,
        config.penalty_form,
    )?;
    if !final_value.is_finite() {
        return Err(Error::Divergence {
            iteration: config.iterations,
            trace,
        });
    }
    trace.push(final_value);
    if config.snapshot_every > 0 {
        snapshots.push((config.iterations, pred.phi().to_vec()));
    }

    Ok(TrainResult {
        predictor: pred,
        objective_trace: trace,
        snapshots,
    })
}
