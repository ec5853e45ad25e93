//! Invariant and partially invariant risk minimization for linear
//! predictors.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`envgen`] — drift-environment generation: weight vectors drawn
//!   coordinate-wise from finite sets, Gaussian designs, spurious-feature
//!   scrambling, and the two synthetic protocol generators.
//! - [`oracle`] — the l0 distance oracle between environments, partition
//!   construction, and exact evaluation of the associated probability
//!   bounds (Poisson-binomial error events, the gamma sampling bound,
//!   environment-count requirements).
//! - [`invariant`] — ERM / IRM / partially invariant objectives over a
//!   linear predictor with a fixed scalar dummy classifier, analytic
//!   gradients, full-batch Adam training, and risk evaluation.
//! - [`graphdist`] — community overlap graphs, Laplacian spectral
//!   embeddings, and environment ranking by embedding distance.
//! - [`harness`] — experiment recipes, tabular ingestion with
//!   environment binning, train-domain validation, and report emission.
//!
//! All stochastic entry points take a `u64` seed and derive independent
//! substreams per environment / trial / seed index, so results are
//! bit-reproducible and independent of thread count (see [`rng`] and
//! [`exec`]).

pub mod envgen;
pub mod error;
pub mod exec;
pub mod graphdist;
pub mod harness;
pub mod invariant;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod stats;

pub use envgen::{Dataset, EnvId, EnvWeights, FeatureSpec};
pub use error::{Error, Result};
