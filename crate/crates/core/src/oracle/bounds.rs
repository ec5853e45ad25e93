//! Exact and closed-form quantities attached to the oracle partition.
//!
//! Conditioned on the oracle firing for environment `e`, two events
//! matter for feature recovery at coordinate `i`:
//!
//! - `E1`: the coordinate of interest kept its reference value, so at
//!   most `delta` of the remaining `c-2` coordinates changed —
//!   unnormalized mass `(1/k) P(1 <= sum B_j <= delta)`;
//! - `E2`: the coordinate of interest changed, so at most `delta-1` of
//!   the rest did — mass `(1 - 1/k) P(0 <= sum B_j <= delta - 1)`,
//!
//! with `B_j ~ Bern(1 - 1/|A_j|)` indicating a change at coordinate `j`.
//! Both are computed exactly by a Poisson-binomial convolution instead of
//! the bounding argument that produces `p >= (c-1-delta) alpha / delta`;
//! the tests verify the bound against the exact values.
//!
//! The masses are the paper-convention unnormalized pair; the normalized
//! error probability is `P(E2) / (P(E1) + P(E2))`.

use serde::{Deserialize, Serialize};

use crate::envgen::FeatureSpec;
use crate::error::{Error, Result};

/// Lower bound `p = (c - 1 - delta) * alpha / delta` on the ratio
/// `P(E1)/P(E2)`.
pub fn ratio_bound_p(c: usize, delta: usize, alpha: f64) -> Result<f64> {
    if delta == 0 {
        return Err(Error::InvalidParameter(
            "ratio bound is undefined for delta = 0".into(),
        ));
    }
    if c < 3 {
        return Err(Error::InvalidParameter(format!(
            "ratio bound needs c >= 3, got {c}"
        )));
    }
    if !(alpha > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "ratio bound needs alpha > 1, got {alpha}"
        )));
    }
    Ok((c as f64 - 1.0 - delta as f64) * alpha / delta as f64)
}

/// Success probability lower bound `(p / (p + 1))^m` for a partition of
/// `m` members.
pub fn success_lower_bound(p: f64, m: usize) -> f64 {
    (p / (p + 1.0)).powi(m as i32)
}

/// Probability masses `P(sum B_j = m)` for `m = 0..=cap`, by dynamic
/// programming over the change probabilities. O(len * cap) time.
fn poisson_binomial_prefix(change_probs: &[f64], cap: usize) -> Vec<f64> {
    let cap = cap.min(change_probs.len());
    let mut pmf = vec![0.0; cap + 1];
    pmf[0] = 1.0;
    for &q in change_probs {
        for m in (0..=cap).rev() {
            let stay = pmf[m] * (1.0 - q);
            let step = if m > 0 { pmf[m - 1] * q } else { 0.0 };
            pmf[m] = stay + step;
        }
    }
    pmf
}

/// Exact unnormalized `(P(E1), P(E2))` for the oracle at `delta` and the
/// given feature of interest (index >= 1; index 0 is the invariant
/// coordinate).
pub fn exact_error_probs(
    spec: &FeatureSpec,
    delta: usize,
    feature_index: usize,
) -> Result<(f64, f64)> {
    spec.check_feature_index(feature_index)?;
    let k = spec.sets()[feature_index].len() as f64;
    let change_probs: Vec<f64> = spec
        .sets()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != 0 && *j != feature_index)
        .map(|(_, set)| 1.0 - 1.0 / set.len() as f64)
        .collect();
    if delta == 0 {
        // both ranges are empty: "1 <= sum <= 0" and "0 <= sum <= -1"
        return Ok((0.0, 0.0));
    }
    let pmf = poisson_binomial_prefix(&change_probs, delta);
    let top = delta.min(change_probs.len());
    let p_e1: f64 = (1.0 / k) * pmf[1..=top].iter().sum::<f64>();
    let top2 = (delta - 1).min(change_probs.len());
    let p_e2: f64 = (1.0 - 1.0 / k) * pmf[..=top2].iter().sum::<f64>();
    Ok((p_e1, p_e2))
}

/// KL divergence between `Bern(a)` and `Bern(b)`, natural log.
pub fn bernoulli_kl(a: f64, b: f64) -> f64 {
    let mut kl = 0.0;
    if a > 0.0 {
        kl += a * (a / b).ln();
    }
    if a < 1.0 {
        kl += (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln();
    }
    kl
}

/// Lower bound `gamma` on the probability that a freshly sampled
/// environment satisfies the oracle:
///
/// ```text
/// gamma = exp(-n * D(delta/n || 1 - 1/(alpha k))) / (k sqrt(2 n)),   n = c - 2
/// ```
///
/// The binomial anti-concentration bound is applied at the pmf point
/// `delta` of the *change* count, whose per-coordinate probability is at
/// most `1 - 1/(alpha k)`; the leading `1/k` accounts for the coordinate
/// of interest keeping its reference value.
pub fn gamma_lower_bound(k: usize, alpha: f64, delta: usize, c: usize) -> Result<f64> {
    if c < 3 {
        return Err(Error::InvalidParameter(format!(
            "gamma needs c >= 3, got {c}"
        )));
    }
    let n = (c - 2) as f64;
    let a = delta as f64 / n;
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma needs 0 < delta/(c-2) < 1, got {a}"
        )));
    }
    if k == 0 || !(alpha * k as f64 > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma needs alpha * k > 1, got alpha = {alpha}, k = {k}"
        )));
    }
    let change = 1.0 - 1.0 / (alpha * k as f64);
    if !(change > 0.0 && change < 1.0) {
        return Err(Error::InvalidParameter(
            "gamma needs the change probability strictly inside (0, 1)".into(),
        ));
    }
    let kl = bernoulli_kl(a, change);
    Ok((-n * kl).exp() / (k as f64 * (2.0 * n).sqrt()))
}

/// Ceiling of `(1/gamma) (d - r + d/r) ln(1/epsilon)` — the number of
/// training environments that makes the partition exceed the linear
/// general position cardinality with probability `1 - epsilon`.
pub fn required_environments(d: usize, r: usize, gamma: f64, epsilon: f64) -> Result<u64> {
    if r == 0 || r > d {
        return Err(Error::InvalidParameter(format!(
            "rank must satisfy 0 < r <= d, got r = {r}, d = {d}"
        )));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be in (0, 1], got {gamma}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be in (0, 1), got {epsilon}"
        )));
    }
    let cardinality = d as f64 - r as f64 + d as f64 / r as f64;
    let bound = (1.0 / gamma) * cardinality * (1.0 / epsilon).ln();
    Ok(bound.ceil() as u64)
}

/// Everything the `bounds` CLI subcommand reports for one spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    /// Ratio lower bound `(c-1-delta) alpha / delta`.
    pub p: f64,
    /// `(p/(p+1))^members`.
    pub success_lb: f64,
    /// Normalized error probability `P(E2) / (P(E1) + P(E2))`.
    pub p_error_exact: f64,
    /// Sampling lower bound for the oracle event.
    pub gamma: f64,
    /// Environments needed for the cardinality guarantee.
    pub required_envs: u64,
    /// Unnormalized event masses and their exact ratio.
    pub p_e1: f64,
    pub p_e2: f64,
    pub ratio_exact: f64,
    /// Partition cardinality used in the success exponent.
    pub members: usize,
    /// Inputs echoed for the record.
    pub delta: usize,
    pub feature_index: usize,
    pub alpha: f64,
}

/// Assembles a [`BoundReport`]. `alpha` is derived from the spec's set
/// cardinalities; `members` defaults to the ceiling of `d - r + d/r`.
pub fn bound_report(
    spec: &FeatureSpec,
    delta: usize,
    feature_index: usize,
    d: usize,
    r: usize,
    epsilon: f64,
    members: Option<usize>,
) -> Result<BoundReport> {
    let c = spec.num_features();
    let alpha = spec.cardinality_ratio(feature_index)?;
    let k = spec.sets()[feature_index].len();
    let p = ratio_bound_p(c, delta, alpha)?;
    let gamma = gamma_lower_bound(k, alpha, delta, c)?;
    let required = required_environments(d, r, gamma, epsilon)?;
    let members =
        members.unwrap_or_else(|| (d as f64 - r as f64 + d as f64 / r as f64).ceil() as usize);
    let success_lb = success_lower_bound(p, members);
    let (p_e1, p_e2) = exact_error_probs(spec, delta, feature_index)?;
    let total = p_e1 + p_e2;
    let p_error_exact = if total > 0.0 { p_e2 / total } else { 0.0 };
    let ratio_exact = if p_e2 > 0.0 { p_e1 / p_e2 } else { f64::INFINITY };
    Ok(BoundReport {
        p,
        success_lb,
        p_error_exact,
        gamma,
        required_envs: required,
        p_e1,
        p_e2,
        ratio_exact,
        members,
        delta,
        feature_index,
        alpha,
    })
}
