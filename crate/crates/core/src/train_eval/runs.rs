use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values of one metric across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); zero for a single run.
    pub std: f64,
}

impl RunSummary {
    pub fn from_values(seeds: Vec<u64>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || seeds.len() != values.len() {
            return Err(Error::invalid("need one value per seed and at least one run"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("run summary input".into()));
        }
        let n = values.len() as f64;
        // Shifted by the first value so that identical runs give exactly v and 0.
        let v0 = values[0];
        let mean = v0 + values.iter().map(|v| v - v0).sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Self {
            seeds,
            values,
            mean,
            std,
        })
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }
}

/// Maps `run` over `seed_k = base_seed + k` on up to `jobs` threads.
///
/// Results come back in seed order regardless of `jobs`.
pub fn run_seeds<T, F>(n_seeds: usize, base_seed: u64, jobs: usize, run: F) -> Result<Vec<Result<T>>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|k| base_seed.wrapping_add(k)).collect();
    if jobs <= 1 {
        return Ok(seeds.into_iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| seeds.par_iter().map(|&s| run(s)).collect()))
}

/// Runs `run` for `n_seeds ≥ 2` consecutive seeds and summarizes the results.
pub fn multi_run<F>(n_seeds: usize, base_seed: u64, jobs: usize, run: F) -> Result<RunSummary>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    if n_seeds < 2 {
        return Err(Error::invalid(format!("n_seeds must be at least 2, got {n_seeds}")));
    }
    let results = run_seeds(n_seeds, base_seed, jobs, &run)?;
    let mut seeds = Vec::with_capacity(n_seeds);
    let mut values = Vec::with_capacity(n_seeds);
    for (k, r) in results.into_iter().enumerate() {
        let seed = base_seed.wrapping_add(k as u64);
        match r {
            Ok(v) => {
                seeds.push(seed);
                values.push(v);
            }
            Err(e) => {
                return Err(Error::Run {
                    seed,
                    source: Box::new(e),
                })
            }
        }
    }
    RunSummary::from_values(seeds, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn summary_statistics() {
        let s = RunSummary::from_values(vec![0, 1, 2, 3], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_abs_diff_eq!(s.std, (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        let flat = RunSummary::from_values(vec![0, 1, 2], vec![0.1; 3]).unwrap();
        assert_eq!(flat.mean, 0.1);
        assert_eq!(flat.std, 0.0);
    }

    #[test]
    fn multi_run_orders_and_reports_seed() {
        let a = multi_run(6, 10, 1, |s| Ok(s as f64 * 0.5)).unwrap();
        let b = multi_run(6, 10, 3, |s| Ok(s as f64 * 0.5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seeds, (10..16).collect::<Vec<_>>());
        let err = multi_run(4, 0, 2, |s| {
            if s == 2 {
                Err(Error::invalid("boom"))
            } else {
                Ok(1.0)
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::Run { seed: 2, .. }));
        assert!(multi_run(1, 0, 1, |_| Ok(1.0)).is_err());
    }
}
