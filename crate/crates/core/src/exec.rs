//! Execution helpers for data-parallel inner loops.
//!
//! With the `parallel` feature (default), [`map`] and [`map_range`] fan out
//! over rayon's global thread pool; without it they degrade to sequential
//! iteration. Outputs preserve input order, so results are identical in both
//! modes. The always-sequential [`map_seq`] and [`map_range_seq`] variants
//! exist so benchmarks can compare the two paths directly.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, in parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    map_seq(items, f)
}

/// Sequential counterpart of [`map`].
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Map `f` over `0..n`, in parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    map_range_seq(n, f)
}

/// Sequential counterpart of [`map_range`].
pub fn map_range_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Limit the worker pool to `jobs` threads. Call once, before any parallel
/// work; later calls are ignored (rayon's global pool is build-once).
pub fn configure_jobs(jobs: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<u64> = (0..500).collect();
        let f = |x: &u64| x * x + 1;
        assert_eq!(map(&items, f), map_seq(&items, f));
        assert_eq!(map_range(100, |i| i * 3), map_range_seq(100, |i| i * 3));
    }
}
