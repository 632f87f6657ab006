//! Worker pool over independent volumes.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Environment variable that overrides the configured worker count.
pub const WORKERS_ENV: &str = "CRYOVOX_WORKERS";

/// Applies `f(index, item)` to every item on `workers` threads and returns
/// the results in input order. Stops at the first error.
///
/// One worker runs inline on the calling thread.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync + Send,
{
    if workers == 0 {
        return Err(Error::invalid("worker count must be >= 1"));
    }
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect())
}

/// Worker count from [`WORKERS_ENV`], if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .map(Some)
            .ok_or_else(|| Error::invalid(format!("{WORKERS_ENV}='{s}' is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order_and_errors() {
        let items: Vec<u32> = (0..50).collect();
        for workers in [1, 3] {
            let out = parallel_map(&items, workers, |i, &x| Ok(x * 2 + i as u32)).unwrap();
            assert_eq!(out, items.iter().map(|x| x * 3).collect::<Vec<_>>());
        }
        let err = parallel_map(&items, 2, |_, &x| {
            if x == 7 {
                Err(Error::invalid("seven"))
            } else {
                Ok(x)
            }
        });
        assert!(err.is_err());
        assert!(parallel_map(&items, 0, |_, &x| Ok(x)).is_err());
    }
}
