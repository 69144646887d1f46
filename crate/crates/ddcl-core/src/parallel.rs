//! Data-parallel iteration helpers with a sequential fallback.
//!
//! Per-sample work (losses, gradients, assignment updates, restarts) is mapped
//! with [`map_indexed`], which dispatches to rayon when the `parallel` feature
//! is enabled and to a plain loop otherwise. Results come back in index order
//! and all reductions over them are performed sequentially, so traces are
//! bit-identical regardless of thread count or feature selection.
//!
//! [`map_indexed_seq`] is always the sequential path; the criterion bench
//! suite compares the two on the same workloads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, returning results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, returning results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    map_indexed_seq(n, f)
}

/// Sequential counterpart of [`map_indexed`], available under every feature set.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Sum per-index contributions in a fixed (index) order.
///
/// The map runs in parallel when enabled; the reduction is always the
/// sequential left fold over index order, keeping sums reproducible.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_indexed(n, f).into_iter().sum()
}
