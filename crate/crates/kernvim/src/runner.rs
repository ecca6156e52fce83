//! Thread-pool execution of bootstrap replicates.

use kernvim_core::inference::{Draw, ReplicateRunner};
use kernvim_core::Result;
use rayon::prelude::*;
use rayon::ThreadPool;

/// Runs replicates on a dedicated rayon pool. Results come back in index
/// order and each replicate owns its RNG stream, so output does not depend
/// on the number of threads.
#[derive(Debug)]
pub struct Parallel {
    pool: ThreadPool,
}

impl Parallel {
    /// `threads = 0` uses rayon's default (all available cores).
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("failed to start bootstrap thread pool");
        Self { pool }
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl ReplicateRunner for Parallel {
    fn run(&self, b: usize, replicate: &(dyn Fn(usize) -> Result<Draw> + Sync)) -> Result<Vec<Draw>> {
        self.pool.install(|| (0..b).into_par_iter().map(replicate).collect())
    }
}
