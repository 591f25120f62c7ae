//! Batch execution over independent items.
//!
//! Every batch loop in the engine goes through [`Execution::map`], which keeps
//! output order equal to input order regardless of scheduling. With the
//! `parallel` feature disabled, [`Execution::Parallel`] degrades to the
//! sequential path.

/// How a batch of independent work items is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Applies `f` to every item, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => items.iter().map(f).collect(),
            Execution::Parallel => par_map(items, f),
        }
    }

    /// Applies `f` to `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            Execution::Sequential => (0..n).map(f).collect(),
            Execution::Parallel => par_map_range(n, f),
        }
    }

    /// Like [`Execution::map`] but stops at the first error in input order.
    pub fn try_map<T, R, E, F>(self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sizes the global worker pool. Only the first call has an effect; a no-op
/// without the `parallel` feature. `0` keeps the library default.
pub fn configure_threads(jobs: usize) {
    #[cfg(feature = "parallel")]
    if jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
}
