use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CiOptions, Inference};
use crate::dataset::ClusteredDataset;
use crate::error::{Error, Result};
use crate::estimators::{ConfidenceInterval, InferenceMethod};
use crate::scalar::{count, sort_scalars, sorted_quantile, to_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub reps: usize,
    pub seed: u64,
    /// Largest tolerated fraction of failed resamples per statistic.
    pub max_failure_rate: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            reps: 1000,
            seed: 0,
            max_failure_rate: 0.05,
        }
    }
}

/// Bootstrap outcome for one component of a vector statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapComponent<T> {
    pub replicates: Vec<T>,
    pub failed: usize,
    /// Failure counts by error message.
    pub census: BTreeMap<String, usize>,
}

impl<T: Scalar> BootstrapComponent<T> {
    /// Standard error (sample SD of the replicates) and percentile interval.
    pub fn inference(&self, opts: &CiOptions, max_failure_rate: f64) -> Result<Inference<T>> {
        let total = self.replicates.len() + self.failed;
        if self.failed as f64 > max_failure_rate * total as f64 || self.replicates.len() < 2 {
            return Err(Error::ResampleFailures {
                failed: self.failed,
                total,
                census: self
                    .census
                    .iter()
                    .map(|(k, v)| format!("{v}x {k}"))
                    .collect::<Vec<_>>()
                    .join("; "),
            });
        }
        let k = count::<T>(self.replicates.len());
        let mean = self.replicates.iter().copied().sum::<T>() / k;
        let ss: T = self.replicates.iter().map(|&v| (v - mean) * (v - mean)).sum();
        let se = (ss / (k - T::one())).sqrt();
        let mut sorted = self.replicates.clone();
        sort_scalars(&mut sorted);
        let tail = (1.0 - opts.level) / 2.0;
        Ok(Inference {
            se,
            ci: ConfidenceInterval {
                lo: sorted_quantile(&sorted, tail),
                hi: sorted_quantile(&sorted, 1.0 - tail),
                level: opts.level,
            },
            method: InferenceMethod::Bootstrap,
            degenerate: !(to_f64(se) > 1e-12),
        })
    }
}

/// Resamples whole clusters with replacement and evaluates a vector-valued
/// statistic on each resample. Every component may fail independently.
///
/// Resample `b` draws from its own ChaCha stream `(seed, b)`, so results do
/// not depend on the number of worker threads.
pub fn cluster_bootstrap<T, F>(
    ds: &ClusteredDataset<T>,
    components: usize,
    opts: &BootstrapOptions,
    statistic: F,
) -> Result<Vec<BootstrapComponent<T>>>
where
    T: Scalar,
    F: Fn(&ClusteredDataset<T>) -> Vec<Result<T>> + Sync,
{
    let n = ds.n_clusters();
    if n < 3 {
        return Err(Error::InvalidDataset(format!(
            "cluster bootstrap needs at least 3 clusters, found {n}"
        )));
    }
    if opts.reps < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least 2 resamples".into()));
    }
    let draws: Vec<Vec<Result<T>>> = (0..opts.reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let out = statistic(&ds.resample(&idx));
            debug_assert_eq!(out.len(), components);
            out
        })
        .collect();

    let mut result: Vec<BootstrapComponent<T>> = (0..components)
        .map(|_| BootstrapComponent {
            replicates: Vec::with_capacity(opts.reps),
            failed: 0,
            census: BTreeMap::new(),
        })
        .collect();
    for draw in draws {
        for (slot, r) in result.iter_mut().zip(draw) {
            match r {
                Ok(v) if v.is_finite() => slot.replicates.push(v),
                Ok(_) => {
                    slot.failed += 1;
                    *slot.census.entry("non-finite value".into()).or_default() += 1;
                }
                Err(e) => {
                    slot.failed += 1;
                    *slot.census.entry(error_class(&e)).or_default() += 1;
                }
            }
        }
    }
    Ok(result)
}

fn error_class(e: &Error) -> String {
    match e {
        Error::Separation { .. } => "separation".into(),
        Error::NonConvergence { .. } => "non-convergence".into(),
        Error::Unstable(_) => "unstable".into(),
        Error::Singular(_) => "singular".into(),
        Error::Degenerate(_) => "degenerate".into(),
        other => other.to_string(),
    }
}
