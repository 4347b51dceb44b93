//! Order-preserving batch mapping, parallel when the `parallel` feature is on.
//!
//! Both entry points return results in input order, so every caller produces
//! identical output regardless of worker count; only wall time differs.

/// Caps the worker pool at `n` threads for the rest of the process. Returns
/// whether the cap took effect; it cannot once the pool has started (or in
/// builds without the `parallel` feature, where there is no pool). Call
/// before the first `map_batch`.
#[cfg(feature = "parallel")]
pub fn configure_jobs(n: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn configure_jobs(_n: usize) -> bool {
    false
}

/// Maps `f` over `items` sequentially. Always available; used as the bench
/// baseline and by builds without the `parallel` feature.
pub fn map_sequential<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `items` on the rayon thread pool, preserving input order.
/// Falls back to the sequential path when built without `parallel`.
#[cfg(feature = "parallel")]
pub fn map_batch<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_batch<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    map_sequential(items, f)
}
