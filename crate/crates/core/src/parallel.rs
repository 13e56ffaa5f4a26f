//! Work scheduling for embarrassingly parallel sweeps.
//!
//! With the default `parallel` feature, [`map_indexed`] fans out over the current
//! rayon thread pool; without it the same call degrades to a plain loop. Every
//! work item derives its own RNG stream from its index, so results are identical
//! for any worker count, including one.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..count`, collecting results in index order.
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Sequential reference version of [`map_indexed`], kept available under every
/// feature combination for direct comparison.
pub fn map_indexed_seq<T, F>(count: usize, f: F) -> Vec<T>
where
    F: FnMut(usize) -> T,
{
    (0..count).map(f).collect()
}
