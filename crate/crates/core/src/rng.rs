//! Seedable, splittable random streams.
//!
//! Every stochastic operation takes a `u64` seed and derives independent
//! ChaCha substreams from it. Substreams are keyed by index, so adding an
//! environment (or Monte Carlo trial) never perturbs earlier ones, and
//! parallel execution over indices reproduces the sequential results
//! bit-for-bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Decorrelates nearby keys before they are used as
/// stream ids.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of keys into one stream id.
pub fn mix(parts: &[u64]) -> u64 {
    let mut acc = 0x243f_6a88_85a3_08d3u64; // arbitrary non-zero start
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}

/// The RNG used throughout the crate.
pub type Stream = ChaCha8Rng;

/// An independent substream of `seed`, keyed by `parts`.
///
/// The master seed selects the ChaCha key; the mixed key selects the
/// stream, so substreams with distinct keys never overlap.
pub fn substream(seed: u64, parts: &[u64]) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(mix(parts));
    rng
}

/// Top-level stream for a seed (key 0).
pub fn root(seed: u64) -> Stream {
    substream(seed, &[0])
}
