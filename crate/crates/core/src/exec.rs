//! Data-parallel map with a sequential fallback.
//!
//! Results always come back in index order, so output never depends on the
//! execution mode or the thread count.

/// How independent work items are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is on, otherwise runs
    /// sequentially.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `(0..count).map(f)` collected in order.
pub fn map_indexed<T, F>(mode: Execution, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..count).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..count).map(f).collect()
}

/// Like [`map_indexed`] for fallible work; the first error in index order wins.
pub fn try_map_indexed<T, E, F>(mode: Execution, count: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(mode, count, f).into_iter().collect()
}
