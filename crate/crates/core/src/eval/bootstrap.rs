use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    /// Metric on the full, unresampled pool.
    pub point: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub replicates: usize,
    /// Replicates on which the metric was undefined.
    pub skipped: usize,
}

/// Group indices drawn with replacement for one replicate. Each replicate
/// has its own stream of the seeded generator.
pub fn resample_groups(seed: u64, replicate: usize, n_groups: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    (0..n_groups).map(|_| rng.random_range(0..n_groups)).collect()
}

/// Percentile of sorted values with linear interpolation between ranks.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile 95% interval of `metric` under resampling of whole groups
/// (subjects). Replicates where the metric is undefined are skipped; more
/// than half skipped is an error.
pub fn bootstrap_ci<S, F>(groups: &[Vec<S>], metric: F, replicates: usize, seed: u64) -> Result<BootstrapCi>
where
    S: Clone + Sync,
    F: Fn(&[S]) -> Result<f64> + Sync,
{
    if groups.len() < 2 {
        return Err(Error::InvalidInput("bootstrap needs at least two subjects".into()));
    }
    if replicates == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one replicate".into()));
    }
    let pool: Vec<S> = groups.iter().flatten().cloned().collect();
    let point = metric(&pool)?;
    let values = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let sample: Vec<S> = resample_groups(seed, r, groups.len())
                .into_iter()
                .flat_map(|g| groups[g].iter().cloned())
                .collect();
            match metric(&sample) {
                Ok(v) => Ok(Some(v)),
                Err(Error::UndefinedMetric(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ok: Vec<f64> = values.into_iter().flatten().collect();
    let skipped = replicates - ok.len();
    if 2 * skipped > replicates {
        return Err(Error::UnstableInterval {
            skipped,
            total: replicates,
        });
    }
    ok.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        point,
        lo95: percentile(&ok, 0.025),
        hi95: percentile(&ok, 0.975),
        replicates,
        skipped,
    })
}
