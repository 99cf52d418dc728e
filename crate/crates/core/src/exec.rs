//! Data-parallel execution with a sequential fallback.
//!
//! Work is always split into the same chunks and results are returned in
//! input order, so reductions over them are identical for both modes and
//! any thread count.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    /// Rayon worker pool; falls back to sequential without the `parallel`
    /// feature.
    Parallel,
    Sequential,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `f(chunk_index, chunk)` over consecutive chunks of `items`, results
    /// in chunk order.
    pub fn map_chunks<I, O, F>(self, items: &[I], chunk: usize, f: F) -> Vec<O>
    where
        I: Sync,
        O: Send,
        F: Fn(usize, &[I]) -> O + Sync + Send,
    {
        let chunk = chunk.max(1);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_chunks(chunk).enumerate().map(|(i, c)| f(i, c)).collect();
        }
        items.chunks(chunk).enumerate().map(|(i, c)| f(i, c)).collect()
    }

    pub fn map<I, O, F>(self, items: &[I], f: F) -> Vec<O>
    where
        I: Sync,
        O: Send,
        F: Fn(&I) -> O + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}
