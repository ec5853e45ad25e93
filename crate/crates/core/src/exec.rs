//! Index-keyed map over `0..n`, parallel when the `parallel` feature is on.
//!
//! Results come back in index order, so callers can reduce sequentially and
//! obtain the same floating-point result regardless of thread count or of
//! whether the feature is enabled.

/// Maps `f` over `0..n`. Parallel under the `parallel` feature, sequential
/// otherwise; output order is index order either way.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Always-sequential variant, kept for benchmarking against the parallel
/// path.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
