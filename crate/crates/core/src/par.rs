//! Execution policy for the data-parallel loops.
//!
//! Every parallel loop in the crate goes through these helpers. Results are
//! always collected in input order and floating-point reductions are done
//! over fixed-size chunks merged sequentially, so the parallel and
//! sequential paths produce bit-identical output.

use serde::{Deserialize, Serialize};

/// Chunk size for row-partitioned reductions. Fixed so that reduction order
/// does not depend on the thread count.
pub const REDUCE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise runs
    /// sequentially.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Evaluates `f` on consecutive `[start, end)` chunks of `0..n` and
    /// returns the per-chunk results in chunk order.
    pub fn map_chunks<U, F>(self, n: usize, chunk: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize, usize) -> U + Sync + Send,
    {
        let chunk = chunk.max(1);
        let n_chunks = n.div_ceil(chunk);
        self.map_range(n_chunks, |c| {
            let start = c * chunk;
            f(start, (start + chunk).min(n))
        })
    }
}
