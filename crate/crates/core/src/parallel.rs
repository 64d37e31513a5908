//! Data-parallel helpers with a sequential fallback.
//!
//! Per-node work (lifting Riccati samples, forming gains, batch cost
//! evaluations) is embarrassingly parallel. With the `parallel` feature the
//! helpers fan out over rayon's global pool; without it, or when
//! [`Execution::Sequential`] is requested, they run on the calling thread.
//! Results are always returned in input order, so output is identical
//! either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run work in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Fallible variant of [`map_indexed`]; returns the first error by index.
pub fn try_map_indexed<T, E, F>(exec: Execution, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            let all: Vec<Result<T, E>> = (0..n).into_par_iter().map(f).collect();
            all.into_iter().collect()
        }
        _ => (0..n).map(f).collect(),
    }
}
