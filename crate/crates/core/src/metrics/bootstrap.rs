use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::stats::quantile_sorted;

pub const DEFAULT_ROUNDS: usize = 50;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    pub rounds: usize,
    /// Rounds whose metric could not be computed.
    pub failed_rounds: usize,
}

/// Resample indices for round `round`. Each round has its own ChaCha
/// stream so results do not depend on scheduling.
pub fn resample_indices(n: usize, seed: u64, round: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Percentile bootstrap over `n` rows. `metric` receives the resampled row
/// indices; a round whose metric fails is skipped and counted.
pub fn bootstrap_ci<F, E>(n: usize, metric: F, rounds: usize, level: f64, seed: u64) -> Result<BootstrapCi, MetricsError>
where
    F: Fn(&[usize]) -> Result<f64, E> + Sync,
{
    if rounds < 2 {
        return Err(MetricsError::Invalid("bootstrap needs at least 2 rounds".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::Invalid(format!("confidence level {level} outside (0, 1)")));
    }
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let results: Vec<Option<f64>> = (0..rounds)
        .into_par_iter()
        .map(|r| {
            let rows = resample_indices(n, seed, r);
            metric(&rows).ok().filter(|v| v.is_finite())
        })
        .collect();
    let mut values: Vec<f64> = results.iter().flatten().copied().collect();
    let failed = rounds - values.len();
    if failed * 2 > rounds {
        return Err(MetricsError::BootstrapFailed { failed, rounds });
    }
    if failed > 0 {
        log::warn!("{failed} of {rounds} bootstrap rounds failed and were skipped");
    }
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapCi {
        low: quantile_sorted(&values, alpha),
        high: quantile_sorted(&values, 1.0 - alpha),
        rounds,
        failed_rounds: failed,
    })
}
