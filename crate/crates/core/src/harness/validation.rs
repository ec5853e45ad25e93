//! Train-domain validation: hyperparameter selection on held-out slices
//! of the training environments, never on test data.

use std::collections::BTreeSet;

use ndarray::Axis;
use rand::seq::SliceRandom;

use crate::envgen::{Dataset, EnvId};
use crate::error::{Error, Result};
use crate::invariant::{evaluate, train, ModelKind, TrainConfig};
use crate::rng::substream;

use super::model_env_split;

const TAG_SPLIT: u64 = 0x5b01;

/// Splits one environment into kept / held-out row subsets by a seeded
/// permutation.
fn split_rows(ds: &Dataset, holdout_frac: f64, seed: u64, env_idx: u64) -> Result<(Dataset, Dataset)> {
    let n = ds.n();
    let n_holdout = ((n as f64 * holdout_frac).round() as usize).max(1);
    if n_holdout >= n {
        return Err(Error::InvalidParameter(format!(
            "environment {} too small to hold out {holdout_frac} of {n} rows",
            ds.env_id()
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = substream(seed, &[TAG_SPLIT, env_idx]);
    indices.shuffle(&mut rng);
    let (keep_idx, hold_idx) = indices.split_at(n - n_holdout);
    let subset = |idx: &[usize]| -> Result<Dataset> {
        let x = ds.x().select(Axis(0), idx);
        let y = ds.y().select(Axis(0), idx);
        Dataset::new(x, y, ds.env_id().clone())
    };
    Ok((subset(keep_idx)?, subset(hold_idx)?))
}

/// Trains every candidate on the kept 1-`holdout_frac` of each training
/// environment and selects the candidate with the lowest average held-out
/// MSE across environments. Diverging candidates are excluded; ties keep
/// the first candidate in input order. Returns the winning index and
/// config.
pub fn train_domain_validation(
    candidates: &[TrainConfig],
    envs: &[Dataset],
    model: ModelKind,
    partition: Option<&BTreeSet<EnvId>>,
    holdout_frac: f64,
    seed: u64,
) -> Result<(usize, TrainConfig)> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("train_domain_validation needs candidates"));
    }
    if envs.is_empty() {
        return Err(Error::EmptyInput("train_domain_validation needs environments"));
    }
    if !(holdout_frac > 0.0 && holdout_frac < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "holdout fraction must be in (0, 1), got {holdout_frac}"
        )));
    }
    let mut kept = Vec::with_capacity(envs.len());
    let mut held = Vec::with_capacity(envs.len());
    for (i, ds) in envs.iter().enumerate() {
        let (k, h) = split_rows(ds, holdout_frac, seed, i as u64)?;
        kept.push(k);
        held.push(h);
    }
    let held_refs: Vec<&Dataset> = held.iter().collect();

    let mut best: Option<(usize, f64)> = None;
    for (idx, candidate) in candidates.iter().enumerate() {
        let (risk, pen) = model_env_split(model, &kept, partition)?;
        let score = match train(candidate, &risk, &pen) {
            Ok(result) => evaluate(&result.predictor, &held_refs)?.avg,
            Err(Error::Divergence { iteration, .. }) => {
                log::warn!("candidate {idx} diverged at iteration {iteration}; excluded");
                continue;
            }
            Err(e) => return Err(e),
        };
        if best.map_or(true, |(_, s)| score < s) {
            best = Some((idx, score));
        }
    }
    match best {
        Some((idx, _)) => Ok((idx, candidates[idx].clone())),
        None => Err(Error::InvalidParameter(
            "every candidate diverged during train-domain validation".into(),
        )),
    }
}
