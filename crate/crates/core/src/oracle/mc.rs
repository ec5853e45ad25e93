//! Monte Carlo validators for the partition bounds.
//!
//! Every estimator is a deterministic function of its inputs and the
//! seed: trials draw from per-index substreams and reductions run in
//! index order, so thread count does not affect the result.

use serde::{Deserialize, Serialize};

use super::{l0, WEIGHT_EQ_TOL};
use crate::envgen::{sample_weight_values_into, EnvWeights, FeatureSpec};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::rng::substream;

const TAG_FREQUENCY: u64 = 0x0f01;
const TAG_CARDINALITY: u64 = 0x0f02;
const TAG_RECOVERY: u64 = 0x0f03;

fn check_reference(spec: &FeatureSpec, reference: &EnvWeights) -> Result<()> {
    if reference.dim() != spec.num_features() {
        return Err(Error::DimensionMismatch {
            expected: spec.num_features(),
            got: reference.dim(),
            context: "reference weights vs spec",
        });
    }
    Ok(())
}

/// Fraction of freshly sampled environments that satisfy the oracle.
pub fn oracle_frequency_mc(
    spec: &FeatureSpec,
    reference: &EnvWeights,
    delta: usize,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    check_reference(spec, reference)?;
    if draws == 0 {
        return Err(Error::EmptyInput("oracle_frequency_mc needs draws >= 1"));
    }
    let hits: u64 = map_indexed(draws, |i| {
        let mut rng = substream(seed, &[TAG_FREQUENCY, i as u64]);
        let mut w = Vec::with_capacity(spec.num_features());
        sample_weight_values_into(spec, &mut w, &mut rng);
        u64::from(l0(&reference.w, &w) <= delta)
    })
    .into_iter()
    .sum();
    Ok(hits as f64 / draws as f64)
}

/// Estimates `P(|E_partition| >= m)` when `t` environments are sampled:
/// the fraction of trials in which at least `m` of the `t` draws satisfy
/// the oracle.
pub fn partition_cardinality_mc(
    spec: &FeatureSpec,
    reference: &EnvWeights,
    delta: usize,
    t: usize,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    check_reference(spec, reference)?;
    if trials == 0 {
        return Err(Error::EmptyInput("partition_cardinality_mc needs trials >= 1"));
    }
    if m == 0 || m > t {
        return Err(Error::InvalidParameter(format!(
            "need t >= m >= 1, got t = {t}, m = {m}"
        )));
    }
    let successes: u64 = map_indexed(trials, |trial| {
        let mut rng = substream(seed, &[TAG_CARDINALITY, trial as u64]);
        let mut w = Vec::with_capacity(spec.num_features());
        let mut hits = 0usize;
        for _ in 0..t {
            sample_weight_values_into(spec, &mut w, &mut rng);
            if l0(&reference.w, &w) <= delta {
                hits += 1;
                if hits >= m {
                    break;
                }
            }
        }
        u64::from(hits >= m)
    })
    .into_iter()
    .sum();
    Ok(successes as f64 / trials as f64)
}

/// Outcome of the partition feature-recovery experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryMc {
    /// Fraction of trials whose whole partition kept the reference value
    /// at the feature of interest.
    pub success_rate: f64,
    /// Average environments drawn until the partition filled.
    pub mean_draws_per_trial: f64,
    pub trials: usize,
    pub members: usize,
}

/// Per trial, samples environments until `m` satisfy the oracle, then
/// checks whether every member kept the reference value at
/// `feature_index`. Trials exceeding `max_draws_per_trial` abort the
/// estimate with an error rather than bias it.
pub fn partition_recovery_mc(
    spec: &FeatureSpec,
    reference: &EnvWeights,
    delta: usize,
    feature_index: usize,
    m: usize,
    trials: usize,
    max_draws_per_trial: usize,
    seed: u64,
) -> Result<RecoveryMc> {
    check_reference(spec, reference)?;
    spec.check_feature_index(feature_index)?;
    if trials == 0 || m == 0 {
        return Err(Error::EmptyInput("partition_recovery_mc needs trials >= 1, m >= 1"));
    }
    let target = reference.w[feature_index];
    let outcomes: Vec<Option<(bool, usize)>> = map_indexed(trials, |trial| {
        let mut rng = substream(seed, &[TAG_RECOVERY, trial as u64]);
        let mut w = Vec::with_capacity(spec.num_features());
        let mut collected = 0usize;
        let mut all_match = true;
        for draw in 1..=max_draws_per_trial {
            sample_weight_values_into(spec, &mut w, &mut rng);
            if l0(&reference.w, &w) <= delta {
                collected += 1;
                if (w[feature_index] - target).abs() > WEIGHT_EQ_TOL {
                    all_match = false;
                }
                if collected == m {
                    return Some((all_match, draw));
                }
            }
        }
        None
    });
    let mut successes = 0usize;
    let mut total_draws = 0usize;
    for outcome in &outcomes {
        match outcome {
            Some((ok, draws)) => {
                successes += usize::from(*ok);
                total_draws += draws;
            }
            None => {
                return Err(Error::InvalidParameter(format!(
                    "a trial failed to fill a partition of {m} within {max_draws_per_trial} draws; raise the cap"
                )));
            }
        }
    }
    Ok(RecoveryMc {
        success_rate: successes as f64 / trials as f64,
        mean_draws_per_trial: total_draws as f64 / trials as f64,
        trials,
        members: m,
    })
}
