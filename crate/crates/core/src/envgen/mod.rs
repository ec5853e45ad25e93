//! Generative and observation models for drifting environments.
//!
//! An environment is a linear regression task `y = <W, X> + eps` whose
//! weight vector is drawn coordinate-wise uniformly from finite sets
//! `A_1..A_c`. `A_1` is a singleton, so coordinate 1 never drifts; the
//! cardinality of the other sets controls how often their coordinates
//! change across environments. On top of the causal features, an optional
//! scramble map mixes in spurious columns while remaining invertible on
//! the causal block.

mod io;

pub use io::{load_spec, read_datasets_csv, save_spec, write_datasets_csv};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg;

/// Opaque environment identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnvId(pub String);

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EnvId {
    fn from(s: &str) -> Self {
        EnvId(s.to_string())
    }
}

impl From<String> for EnvId {
    fn from(s: String) -> Self {
        EnvId(s)
    }
}

/// Per-feature weight sets `A_1..A_c` plus the label-noise level.
///
/// Invariants, enforced at construction and on deserialization:
/// `|A_1| = 1`, `|A_i| > 1` for `i >= 2`, every element finite,
/// `sigma_y >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureSpec")]
pub struct FeatureSpec {
    sets: Vec<Vec<f64>>,
    sigma_y: f64,
}

#[derive(Deserialize)]
struct RawFeatureSpec {
    sets: Vec<Vec<f64>>,
    sigma_y: f64,
}

impl TryFrom<RawFeatureSpec> for FeatureSpec {
    type Error = Error;

    fn try_from(raw: RawFeatureSpec) -> Result<Self> {
        FeatureSpec::new(raw.sets, raw.sigma_y)
    }
}

impl FeatureSpec {
    pub fn new(sets: Vec<Vec<f64>>, sigma_y: f64) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::InvalidSpec("no weight sets given".into()));
        }
        if sets[0].len() != 1 {
            return Err(Error::InvalidSpec(format!(
                "first weight set must be a singleton, has {} elements",
                sets[0].len()
            )));
        }
        for (i, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::InvalidSpec(format!("weight set {i} is empty")));
            }
            if i > 0 && set.len() < 2 {
                return Err(Error::InvalidSpec(format!(
                    "weight set {i} must have more than one element"
                )));
            }
            if set.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "weight set {i} contains a non-finite value"
                )));
            }
        }
        if !sigma_y.is_finite() || sigma_y < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "sigma_y must be finite and non-negative, got {sigma_y}"
            )));
        }
        Ok(FeatureSpec { sets, sigma_y })
    }

    /// A spec with `A_1 = {w_inv}` and the remaining sets as given. Values
    /// of each set are symmetric around zero with unit spacing.
    pub fn with_set_sizes(w_inv: f64, sizes: &[usize], sigma_y: f64) -> Result<Self> {
        let mut sets = vec![vec![w_inv]];
        for &m in sizes {
            sets.push(symmetric_set(m, 1.0));
        }
        FeatureSpec::new(sets, sigma_y)
    }

    /// Number of features `c`.
    pub fn num_features(&self) -> usize {
        self.sets.len()
    }

    /// The sole element of `A_1`.
    pub fn invariant_weight(&self) -> f64 {
        self.sets[0][0]
    }

    pub fn sets(&self) -> &[Vec<f64>] {
        &self.sets
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    /// Cardinality ratio `alpha = min_{j != 0, j != feature_index} |A_j| / k`
    /// with `k = |A_feature_index|`.
    pub fn cardinality_ratio(&self, feature_index: usize) -> Result<f64> {
        self.check_feature_index(feature_index)?;
        let k = self.sets[feature_index].len();
        let min_other = self
            .sets
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != 0 && *j != feature_index)
            .map(|(_, s)| s.len())
            .min()
            .ok_or_else(|| {
                Error::InvalidSpec("cardinality ratio needs at least three features".into())
            })?;
        Ok(min_other as f64 / k as f64)
    }

    pub(crate) fn check_feature_index(&self, feature_index: usize) -> Result<()> {
        if feature_index == 0 || feature_index >= self.num_features() {
            return Err(Error::InvalidParameter(format!(
                "feature index must be in 1..{} (0 is the invariant feature), got {feature_index}",
                self.num_features()
            )));
        }
        Ok(())
    }
}

/// `m` values symmetric around zero with spacing `scale`; includes 0 when
/// `m` is odd.
pub fn symmetric_set(m: usize, scale: f64) -> Vec<f64> {
    (0..m)
        .map(|i| (i as f64 - (m as f64 - 1.0) / 2.0) * scale)
        .collect()
}

/// One environment's realized weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvWeights {
    pub w: Vec<f64>,
    pub env_id: EnvId,
}

impl EnvWeights {
    pub fn new(w: Vec<f64>, env_id: EnvId) -> Self {
        EnvWeights { w, env_id }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }
}

/// A finite labelled sample from one environment. Rows of `x` are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    env_id: EnvId,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, env_id: EnvId) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::EmptyInput("dataset must contain at least one row"));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
                context: "dataset rows vs labels",
            });
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "dataset {env_id} contains non-finite entries"
            )));
        }
        Ok(Dataset { x, y, env_id })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn env_id(&self) -> &EnvId {
        &self.env_id
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// Draws one weight vector: coordinate 0 is the invariant weight, every
/// other coordinate uniform over its set.
pub fn sample_env_weights<R: Rng + ?Sized>(
    spec: &FeatureSpec,
    env_id: EnvId,
    rng: &mut R,
) -> EnvWeights {
    let mut w = Vec::with_capacity(spec.num_features());
    sample_weight_values_into(spec, &mut w, rng);
    EnvWeights::new(w, env_id)
}

/// Id-free weight draw into a reusable buffer; the hot path for Monte
/// Carlo loops over millions of environments.
pub fn sample_weight_values_into<R: Rng + ?Sized>(
    spec: &FeatureSpec,
    out: &mut Vec<f64>,
    rng: &mut R,
) {
    out.clear();
    for set in spec.sets() {
        out.push(if set.len() == 1 {
            set[0]
        } else {
            set[rng.random_range(0..set.len())]
        });
    }
}

/// Standard-normal design matrix, `y = X w + eps` with `eps ~ N(0, sigma_y^2)`.
pub fn sample_dataset<R: Rng + ?Sized>(
    weights: &EnvWeights,
    n: usize,
    sigma_y: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyInput("sample_dataset needs n >= 1"));
    }
    if !sigma_y.is_finite() || sigma_y < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sigma_y must be finite and non-negative, got {sigma_y}"
        )));
    }
    let c = weights.dim();
    let x = Array2::from_shape_simple_fn((n, c), || rng.sample::<f64, _>(StandardNormal));
    let w = Array1::from_vec(weights.w.clone());
    let mut y = x.dot(&w);
    if sigma_y > 0.0 {
        for v in y.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma_y * z;
        }
    }
    Dataset::new(x, y, weights.env_id.clone())
}

/// How the spurious columns `X'` are generated before scrambling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum SpuriousRule {
    /// Each spurious column i.i.d. `N(0, sigma^2)`, independent of the label.
    IndependentGaussian { sigma: f64 },
    /// Each spurious column is `y + N(0, sigma^2)` — the anti-causal
    /// construction behind Example 1's third feature.
    AntiCausal { sigma: f64 },
}

/// A mixing matrix `S in R^{d x (c+q)}` applied to `[X; X']`, together with
/// the stored recovery map that returns the causal block exactly.
#[derive(Debug, Clone)]
pub struct ScrambleMap {
    s: Array2<f64>,
    causal_dim: usize,
    spurious_dim: usize,
    recovery: Array2<f64>,
}

impl ScrambleMap {
    /// Validates that the causal columns can be recovered from `S [X; X']`
    /// for *any* spurious input, i.e. that some `R` satisfies
    /// `R S = [I_c  0]`. Construction: project out the spurious column
    /// space (`P = I - S_q S_q^+`), then left-invert the projected causal
    /// block.
    pub fn new(s: Array2<f64>, causal_dim: usize, spurious_dim: usize) -> Result<Self> {
        if s.ncols() != causal_dim + spurious_dim {
            return Err(Error::DimensionMismatch {
                expected: causal_dim + spurious_dim,
                got: s.ncols(),
                context: "scramble matrix columns",
            });
        }
        if causal_dim == 0 {
            return Err(Error::InvalidSpec("scramble needs a causal block".into()));
        }
        let d = s.nrows();
        let s_causal = s.slice(ndarray::s![.., 0..causal_dim]).to_owned();
        let projector = if spurious_dim == 0 {
            Array2::eye(d)
        } else {
            let s_spur = s.slice(ndarray::s![.., causal_dim..]).to_owned();
            let pinv = linalg::pseudo_inverse(&s_spur, 1e-12)?;
            Array2::eye(d) - s_spur.dot(&pinv)
        };
        let projected = projector.dot(&s_causal);
        if linalg::rank(&projected, 1e-10) < causal_dim {
            return Err(Error::InvalidSpec(
                "scramble matrix does not admit exact recovery of the causal block".into(),
            ));
        }
        let recovery = linalg::pseudo_inverse(&projected, 1e-12)?.dot(&projector);
        Ok(ScrambleMap {
            s,
            causal_dim,
            spurious_dim,
            recovery,
        })
    }

    /// Identity map on `c` causal features, no spurious block.
    pub fn identity(causal_dim: usize) -> Result<Self> {
        ScrambleMap::new(Array2::eye(causal_dim), causal_dim, 0)
    }

    pub fn causal_dim(&self) -> usize {
        self.causal_dim
    }

    pub fn spurious_dim(&self) -> usize {
        self.spurious_dim
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.s
    }

    /// The stored left inverse; `recover(scramble(ds)) == causal block`.
    pub fn recovery(&self) -> &Array2<f64> {
        &self.recovery
    }

    /// Applies the recovery map row-wise, returning the causal features.
    pub fn recover(&self, observed: &Array2<f64>) -> Array2<f64> {
        observed.dot(&self.recovery.t())
    }
}

/// Generates spurious columns per `rule` and emits `S [X; X']` with labels
/// unchanged.
pub fn scramble<R: Rng + ?Sized>(
    ds: &Dataset,
    map: &ScrambleMap,
    rule: SpuriousRule,
    rng: &mut R,
) -> Result<Dataset> {
    if ds.dim() != map.causal_dim() {
        return Err(Error::DimensionMismatch {
            expected: map.causal_dim(),
            got: ds.dim(),
            context: "scramble causal features",
        });
    }
    let n = ds.n();
    let q = map.spurious_dim();
    let mut joint = Array2::zeros((n, map.causal_dim() + q));
    joint
        .slice_mut(ndarray::s![.., 0..map.causal_dim()])
        .assign(ds.x());
    for i in 0..n {
        for j in 0..q {
            let z: f64 = rng.sample(StandardNormal);
            joint[[i, map.causal_dim() + j]] = match rule {
                SpuriousRule::IndependentGaussian { sigma } => sigma * z,
                SpuriousRule::AntiCausal { sigma } => ds.y()[i] + sigma * z,
            };
        }
    }
    let observed = joint.dot(&map.matrix().t());
    Dataset::new(observed, ds.y().clone(), ds.env_id().clone())
}

/// Sign of the drifting coefficient in the three-feature example task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Validation hook for an optional upper bound on the environment scale.
pub fn validate_sigma_bound(sigma_e: f64, sigma_max: f64) -> Result<()> {
    if sigma_e > sigma_max {
        return Err(Error::InvalidParameter(format!(
            "sigma_e {sigma_e} exceeds the configured bound {sigma_max}"
        )));
    }
    Ok(())
}

/// Three-feature task with a sign-drifting causal feature and an
/// anti-causal third feature:
/// `x1, x2 ~ N(0, sigma^2)`, `y = x1 + sign * x2 + eps`,
/// `eps ~ N(0, sigma^2)`, `x3 = y + N(0, 1)`.
pub fn gen_example1<R: Rng + ?Sized>(
    sigma_e: f64,
    sign: Sign,
    n: usize,
    env_id: EnvId,
    rng: &mut R,
) -> Result<Dataset> {
    if !(sigma_e > 0.0) || !sigma_e.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sigma_e must be positive and finite, got {sigma_e}"
        )));
    }
    if n == 0 {
        return Err(Error::EmptyInput("gen_example1 needs n >= 1"));
    }
    let c = sign.value();
    let mut x = Array2::zeros((n, 3));
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let x1 = sigma_e * rng.sample::<f64, _>(StandardNormal);
        let x2 = sigma_e * rng.sample::<f64, _>(StandardNormal);
        let eps = sigma_e * rng.sample::<f64, _>(StandardNormal);
        let yi = x1 + c * x2 + eps;
        let x3 = yi + rng.sample::<f64, _>(StandardNormal);
        x[[i, 0]] = x1;
        x[[i, 1]] = x2;
        x[[i, 2]] = x3;
        y[i] = yi;
    }
    Dataset::new(x, y, env_id)
}

/// Two-block task used for the feature-suppression protocol:
/// `X1, X2 ~ N(0, sigma^2 I)` in `R^m` each,
/// `y = X1.W1 + active * X2.W2 + eps`, `eps ~ N(0, sigma^2)`.
/// Features are the `2m`-dim concatenation.
pub fn gen_appendix_synth<R: Rng + ?Sized>(
    sigma_e: f64,
    active: bool,
    w1: &[f64],
    w2: &[f64],
    n: usize,
    env_id: EnvId,
    rng: &mut R,
) -> Result<Dataset> {
    if !(sigma_e > 0.0) || !sigma_e.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sigma_e must be positive and finite, got {sigma_e}"
        )));
    }
    if w1.len() != w2.len() || w1.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: w1.len().max(1),
            got: w2.len(),
            context: "weight blocks",
        });
    }
    if n == 0 {
        return Err(Error::EmptyInput("gen_appendix_synth needs n >= 1"));
    }
    let m = w1.len();
    let gate = if active { 1.0 } else { 0.0 };
    let mut x = Array2::zeros((n, 2 * m));
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut acc = sigma_e * rng.sample::<f64, _>(StandardNormal);
        for j in 0..m {
            let x1 = sigma_e * rng.sample::<f64, _>(StandardNormal);
            let x2 = sigma_e * rng.sample::<f64, _>(StandardNormal);
            x[[i, j]] = x1;
            x[[i, m + j]] = x2;
            acc += x1 * w1[j] + gate * x2 * w2[j];
        }
        y[i] = acc;
    }
    Dataset::new(x, y, env_id)
}
