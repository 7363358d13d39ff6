//! Bounded worker pool with an ordered reduction over trial results.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SimError};

/// Share of failed trials above which an experiment is rejected.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

/// Number of worker threads to use when none is given.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs `run(0..n)` on `workers` threads and feeds successful results to
/// `fold` in trial order, so the reduction does not depend on scheduling.
/// Trials run in chunks to bound the number of results held at once.
pub fn fold_trials<R, F, G>(n: usize, workers: usize, run: F, mut fold: G) -> Result<Vec<TrialFailure>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync,
    G: FnMut(usize, R),
{
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::Config(format!("worker pool: {e}")))?;
    let chunk = (workers * 4).max(8);
    let mut failures = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let results: Vec<Result<R>> = pool.install(|| (start..end).into_par_iter().map(&run).collect());
        for (trial, r) in (start..end).zip(results) {
            match r {
                Ok(v) => fold(trial, v),
                Err(e) => failures.push(TrialFailure {
                    trial,
                    message: e.to_string(),
                }),
            }
        }
        start = end;
    }
    if n > 0 && failures.len() as f64 > MAX_FAILURE_RATE * n as f64 {
        return Err(SimError::TooManyFailures {
            failed: failures.len(),
            total: n,
            first: failures[0].message.clone(),
        });
    }
    Ok(failures)
}
