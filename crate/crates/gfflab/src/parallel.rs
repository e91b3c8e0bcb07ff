//! Replica execution on a bounded worker pool.
//!
//! Every replica draws from its own `(seed, replica, purpose)` streams and results come
//! back in replica order, so the worker count never changes an output.

use rayon::prelude::*;

pub const WORKERS_ENV: &str = "GFFLAB_WORKERS";

pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Debug)]
pub struct Pool {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl Pool {
    pub fn new(workers: usize) -> Self {
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool");
        Pool { pool, workers }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `f(0), …, f(n-1)` in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n as u64).into_par_iter().map(&f).collect())
    }

    pub fn try_map<T, E, F>(&self, n: usize, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(u64) -> Result<T, E> + Sync + Send,
    {
        self.pool.install(|| (0..n as u64).into_par_iter().map(&f).collect())
    }
}
