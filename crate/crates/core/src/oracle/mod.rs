//! Distance oracle between environments and everything built on it:
//! partition construction, the average-distance selection criterion, and
//! exact evaluation of the probability bounds governing when a partition
//! recovers a drifting feature.
//!
//! The oracle is `omega(e) = 1[ ||W_ref - W_e||_0 <= delta ]`: an
//! environment is "close" when at most `delta` of its weight coordinates
//! differ from the reference. Weights live in finite sets, so exact
//! comparison is meaningful; a 1e-12 tolerance absorbs serialization
//! round-trips.

mod bounds;
mod mc;

pub use bounds::{
    bernoulli_kl, bound_report, exact_error_probs, gamma_lower_bound, ratio_bound_p,
    required_environments, success_lower_bound, BoundReport,
};
pub use mc::{oracle_frequency_mc, partition_cardinality_mc, partition_recovery_mc, RecoveryMc};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::envgen::{EnvId, EnvWeights};
use crate::error::{Error, Result};

/// Equality tolerance for weight coordinates.
pub const WEIGHT_EQ_TOL: f64 = 1e-12;

pub(crate) fn l0(a: &[f64], b: &[f64]) -> usize {
    a.iter()
        .zip(b.iter())
        .filter(|(x, y)| (*x - *y).abs() > WEIGHT_EQ_TOL)
        .count()
}

/// Number of coordinates where the vectors differ.
pub fn l0_distance(a: &[f64], b: &[f64]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
            context: "l0 distance operands",
        });
    }
    Ok(l0(a, b))
}

/// `true` iff the l0 distance between the weight vectors is at most
/// `delta` (boundary inclusive).
pub fn oracle_indicator(reference: &EnvWeights, env: &EnvWeights, delta: usize) -> Result<bool> {
    Ok(l0_distance(&reference.w, &env.w)? <= delta)
}

/// A reference environment, a distance budget, and the environments the
/// oracle admitted. The reference is always a member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub ref_env: EnvId,
    pub delta: usize,
    pub members: BTreeSet<EnvId>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: &EnvId) -> bool {
        self.members.contains(id)
    }
}

/// Collects `{e : omega(e) = 1} ∪ {reference}`. Deterministic and
/// order-insensitive (set semantics). Emits a warning when `delta` is
/// outside the regime the recovery bound assumes.
pub fn build_partition(
    envs: &[EnvWeights],
    reference: &EnvWeights,
    delta: usize,
) -> Result<Partition> {
    let c = reference.dim();
    if c >= 2 && (delta as f64) >= (c as f64 - 2.0) / 2.0 {
        log::warn!(
            "delta = {delta} is not below (c-2)/2 = {}; the feature-recovery bound does not apply",
            (c as f64 - 2.0) / 2.0
        );
    }
    let mut members = BTreeSet::new();
    members.insert(reference.env_id.clone());
    for env in envs {
        if oracle_indicator(reference, env, delta)? {
            members.insert(env.env_id.clone());
        }
    }
    Ok(Partition {
        ref_env: reference.env_id.clone(),
        delta,
        members,
    })
}

/// `true` iff the members' mean distance to the reference is strictly
/// below the mean over all environments. The reference is looked up in
/// `all_envs` by the partition's reference id.
pub fn avg_distance_criterion<F>(
    candidate: &Partition,
    all_envs: &[EnvWeights],
    metric: F,
) -> Result<bool>
where
    F: Fn(&EnvWeights, &EnvWeights) -> f64,
{
    if all_envs.is_empty() {
        return Err(Error::EmptyInput("avg_distance_criterion needs environments"));
    }
    let reference = all_envs
        .iter()
        .find(|e| e.env_id == candidate.ref_env)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "reference environment {} not present in env list",
                candidate.ref_env
            ))
        })?;
    let mut member_sum = 0.0;
    let mut member_count = 0usize;
    let mut total_sum = 0.0;
    for env in all_envs {
        let d = metric(reference, env);
        total_sum += d;
        if candidate.contains(&env.env_id) {
            member_sum += d;
            member_count += 1;
        }
    }
    if member_count == 0 {
        return Err(Error::EmptyInput("partition has no members in env list"));
    }
    let member_mean = member_sum / member_count as f64;
    let total_mean = total_sum / all_envs.len() as f64;
    Ok(member_mean < total_mean)
}

/// The l0 metric as a plain function, for [`avg_distance_criterion`].
pub fn l0_metric(a: &EnvWeights, b: &EnvWeights) -> f64 {
    l0(&a.w, &b.w) as f64
}

#[cfg(test)]
mod tests;
