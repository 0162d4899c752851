//! Thread-pool executor for path-parallel maps.

use fkboson_core::feynman_kac::PathExecutor;
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

/// Runs paths on a dedicated rayon pool. Results come back in index order,
/// so reductions downstream do not depend on the number of workers.
pub struct RayonExecutor {
    pool: ThreadPool,
    workers: usize,
}

impl RayonExecutor {
    pub fn new(workers: usize) -> anyhow::Result<Self> {
        let workers = workers.max(1);
        let pool = ThreadPoolBuilder::new().num_threads(workers).build()?;
        Ok(Self { pool, workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }
}

impl PathExecutor for RayonExecutor {
    fn map_indexed<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fkboson_core::feynman_kac::Sequential;

    #[test]
    fn order_matches_sequential() {
        let ex = RayonExecutor::new(4).unwrap();
        let a = ex.map_indexed(1000, |i| i * i + 1);
        let b = Sequential.map_indexed(1000, |i| i * i + 1);
        assert_eq!(a, b);
    }
}
