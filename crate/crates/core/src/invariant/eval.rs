//! Risk evaluation: per-environment reports, the conditional risk over a
//! pinned-feature family of environments, and block suppression ratios.

use std::collections::BTreeMap;

use super::objective::mse_risk;
use super::{Predictor, RiskReport};
use crate::envgen::{sample_dataset, sample_weight_values_into, Dataset, EnvId, EnvWeights, FeatureSpec};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::rng::substream;

const TAG_COND: u64 = 0x7e01;

/// Per-environment MSE on held-out environments, with unweighted average
/// and worst group.
pub fn evaluate(pred: &Predictor, test_envs: &[&Dataset]) -> Result<RiskReport> {
    if test_envs.is_empty() {
        return Err(Error::EmptyInput("evaluate needs at least one test environment"));
    }
    let mut per_env = BTreeMap::new();
    for ds in test_envs {
        let risk = mse_risk(pred, ds)?;
        if per_env.insert(ds.env_id().to_string(), risk).is_some() {
            return Err(Error::InvalidParameter(format!(
                "duplicate test environment id {}",
                ds.env_id()
            )));
        }
    }
    RiskReport::from_per_env(per_env)
}

/// Monte Carlo estimate of the risk conditioned on the feature of
/// interest keeping the reference value: environments are drawn from the
/// spec with coordinate `feature_index` pinned to `reference`, a fresh
/// sample of `n_per_env` rows is drawn per environment, and the MSE is
/// averaged over `draws` environments.
pub fn conditional_risk(
    pred: &Predictor,
    spec: &FeatureSpec,
    reference: &EnvWeights,
    feature_index: usize,
    draws: usize,
    n_per_env: usize,
    seed: u64,
) -> Result<f64> {
    spec.check_feature_index(feature_index)?;
    if reference.dim() != spec.num_features() {
        return Err(Error::DimensionMismatch {
            expected: spec.num_features(),
            got: reference.dim(),
            context: "reference weights vs spec",
        });
    }
    if pred.dim() != spec.num_features() {
        return Err(Error::DimensionMismatch {
            expected: spec.num_features(),
            got: pred.dim(),
            context: "predictor vs spec features",
        });
    }
    if draws == 0 || n_per_env == 0 {
        return Err(Error::EmptyInput("conditional_risk needs draws >= 1 and n_per_env >= 1"));
    }
    let pinned = reference.w[feature_index];
    let risks = map_indexed(draws, |i| -> Result<f64> {
        let mut rng = substream(seed, &[TAG_COND, i as u64]);
        let mut w = Vec::with_capacity(spec.num_features());
        sample_weight_values_into(spec, &mut w, &mut rng);
        w[feature_index] = pinned;
        let env = EnvWeights::new(w, EnvId::from("conditional-mc"));
        let ds = sample_dataset(&env, n_per_env, spec.sigma_y(), &mut rng)?;
        mse_risk(pred, &ds)
    });
    let mut total = 0.0;
    for r in risks {
        total += r?;
    }
    Ok(total / draws as f64)
}

/// `(||phi_block1|| / ||w1||, ||phi_block2|| / ||w2||)` for a predictor
/// over the two-block synthetic task.
pub fn suppression_ratios(pred: &Predictor, w1: &[f64], w2: &[f64]) -> Result<(f64, f64)> {
    if pred.dim() != w1.len() + w2.len() {
        return Err(Error::DimensionMismatch {
            expected: w1.len() + w2.len(),
            got: pred.dim(),
            context: "predictor vs weight blocks",
        });
    }
    let norm = |xs: &[f64]| xs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n1 = norm(w1);
    let n2 = norm(w2);
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::InvalidParameter(
            "suppression ratio undefined for a zero-norm weight block".into(),
        ));
    }
    let phi = pred.phi().as_slice().expect("contiguous");
    let p1 = norm(&phi[..w1.len()]);
    let p2 = norm(&phi[w1.len()..]);
    Ok((p1 / n1, p2 / n2))
}
