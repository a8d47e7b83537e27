//! Population values of the rank correlations and rank ICCs.
//!
//! Bivariate-normal scenarios use the closed form `6·asin(ρ/2)/π`. The
//! others are estimated by Monte Carlo in independent batches, whose spread
//! gives the reported standard error.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankcorr::rankcore::midranks;
use rankcorr::scalar::norm_cdf;
use rankcorr::{spearman, EstimatorKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scenario::{categorize, normal_pair, ordinal_cutoffs, Scenario, ScenarioConfig};
use crate::SimError;

/// Default Monte Carlo budget in observations.
pub const DEFAULT_MC_SIZE: usize = 1_000_000;
/// Smallest accepted Monte Carlo budget.
pub const MIN_MC_SIZE: usize = 100_000;
const MC_BATCHES: usize = 20;
const TRUTH_SEED: u64 = 0x7275_7468;

/// Spearman correlation of a bivariate normal pair with Pearson correlation `rho`.
pub fn arcsin_rank(rho: f64) -> f64 {
    6.0 * (rho / 2.0).asin() / PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub value: f64,
    /// Monte Carlo standard error; absent for closed forms.
    pub mc_se: Option<f64>,
}

impl Truth {
    pub fn exact(value: f64) -> Self {
        Self { value, mc_se: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueValues {
    pub gamma_t: Truth,
    pub gamma_b: Truth,
    pub gamma_w: Truth,
    pub icc_x: Truth,
    pub icc_y: Truth,
}

impl TrueValues {
    /// Target of an estimator; the naive comparators aim at the same
    /// between and within quantities.
    pub fn target(&self, kind: EstimatorKind) -> Truth {
        match kind {
            EstimatorKind::Total => self.gamma_t,
            EstimatorKind::WithinPsr | EstimatorKind::NaiveWithin => self.gamma_w,
            EstimatorKind::BetweenMedian | EstimatorKind::BetweenApprox | EstimatorKind::NaiveBetween => self.gamma_b,
        }
    }
}

/// Runs `stat` on `MC_BATCHES` independent streams and summarises.
fn batched<F>(stream_base: u64, per_batch: usize, stat: F) -> Truth
where
    F: Fn(&mut ChaCha8Rng, usize) -> f64 + Sync,
{
    let values: Vec<f64> = (0..MC_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(TRUTH_SEED);
            rng.set_stream(stream_base + b as u64);
            stat(&mut rng, per_batch)
        })
        .collect();
    let m = MC_BATCHES as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Truth {
        value: mean,
        mc_se: Some((var / m).sqrt()),
    }
}

fn spearman_of(pairs: &[(f64, f64)]) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    spearman(&x, &y).unwrap_or(f64::NAN)
}

/// Rank ICC from pairs of members of the same cluster, using the mid-CDF of
/// the pooled members so that both positions share one marginal.
fn pair_rank_icc(pairs: &[(f64, f64)]) -> f64 {
    let m = pairs.len();
    let pooled: Vec<f64> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    let r = midranks(&pooled);
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r.len() as f64;
    let cov = (0..m).map(|i| (r[2 * i] - mean) * (r[2 * i + 1] - mean)).sum::<f64>() / m as f64;
    cov / var
}

fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Single observation `(x, y)` and the cluster effect behind it, on the
/// latent scale.
fn latent_obs<R: Rng>(cfg: &ScenarioConfig, rng: &mut R) -> ((f64, f64), (f64, f64)) {
    let (ux, uy) = normal_pair(rng, cfg.rho_b, 1.0, 1.0);
    let u = (ux + cfg.mean_u.0, uy + cfg.mean_u.1);
    (u, normal_pair(rng, cfg.rho_w, 1.0, 1.0))
}

/// Conditional PSR `P(C < c | U) − P(C > c | U)` of a category given its
/// latent cluster effect, with unit-variance deviations.
fn ordinal_psr(c: u32, u: f64, cutoffs: &[f64]) -> f64 {
    let c = c as usize;
    let below = if c == 0 { 0.0 } else { norm_cdf(cutoffs[c - 1] - u) };
    let above = if c == cutoffs.len() { 0.0 } else { 1.0 - norm_cdf(cutoffs[c] - u) };
    below - above
}

/// Population `(γ_t, γ_b, γ_w, γ_I_X, γ_I_Y)` of a scenario. `mc_size` is
/// the Monte Carlo budget in observations for scenarios without a closed
/// form; it defaults to [`DEFAULT_MC_SIZE`].
pub fn true_values(cfg: &ScenarioConfig, mc_size: Option<usize>) -> Result<TrueValues, SimError> {
    cfg.validate()?;
    let mc = mc_size.unwrap_or(DEFAULT_MC_SIZE);
    if mc < MIN_MC_SIZE {
        return Err(SimError::InvalidConfig(format!(
            "Monte Carlo size {mc} is below the minimum {MIN_MC_SIZE}"
        )));
    }
    let per = mc / MC_BATCHES;
    let (rb, rw) = (cfg.rho_b, cfg.rho_w);
    let gb = Truth::exact(arcsin_rank(rb));
    let gw = Truth::exact(arcsin_rank(rw));
    Ok(match cfg.scenario {
        Scenario::I | Scenario::II => {
            let icc = Truth::exact(arcsin_rank(0.5));
            TrueValues {
                gamma_t: Truth::exact(arcsin_rank((rb + rw) / 2.0)),
                gamma_b: gb,
                gamma_w: gw,
                icc_x: icc,
                icc_y: icc,
            }
        }
        Scenario::NegativePairs => {
            let icc = Truth::exact(arcsin_rank(-0.5));
            TrueValues {
                gamma_t: Truth::exact(arcsin_rank(rb / 4.0 + 3.0 * rw / 4.0)),
                gamma_b: gb,
                gamma_w: gw,
                icc_x: icc,
                icc_y: icc,
            }
        }
        Scenario::III => {
            let gamma_t = batched(0, per, |rng, m| {
                let pairs: Vec<(f64, f64)> = (0..m)
                    .map(|_| {
                        let (u, r) = latent_obs(cfg, rng);
                        (u.0.exp() + r.0, u.1.exp() + r.1)
                    })
                    .collect();
                spearman_of(&pairs)
            });
            let icc = |axis: usize, base: u64| {
                batched(base, per / 2, move |rng, m| {
                    let pairs: Vec<(f64, f64)> = (0..m)
                        .map(|_| {
                            let (u, r1) = latent_obs(cfg, rng);
                            let r2 = normal_pair(rng, rw, 1.0, 1.0);
                            if axis == 0 {
                                (u.0.exp() + r1.0, u.0.exp() + r2.0)
                            } else {
                                (u.1.exp() + r1.1, u.1.exp() + r2.1)
                            }
                        })
                        .collect();
                    pair_rank_icc(&pairs)
                })
            };
            TrueValues {
                gamma_t,
                gamma_b: gb,
                gamma_w: gw,
                icc_x: icc(0, 100),
                icc_y: icc(1, 200),
            }
        }
        Scenario::Ordinal { levels } => {
            let cx = ordinal_cutoffs(levels, cfg.mean_u.0, 2.0);
            let cy = ordinal_cutoffs(levels, cfg.mean_u.1, 2.0);
            let (cx, cy) = (&cx, &cy);
            let gamma_t = batched(0, per, |rng, m| {
                let pairs: Vec<(f64, f64)> = (0..m)
                    .map(|_| {
                        let (u, r) = latent_obs(cfg, rng);
                        (
                            categorize(u.0 + r.0, cx) as f64,
                            categorize(u.1 + r.1, cy) as f64,
                        )
                    })
                    .collect();
                spearman_of(&pairs)
            });
            // the median of a cluster is the category holding its latent centre
            let gamma_b = batched(300, per, |rng, m| {
                let pairs: Vec<(f64, f64)> = (0..m)
                    .map(|_| {
                        let (u, _) = latent_obs(cfg, rng);
                        (categorize(u.0, cx) as f64, categorize(u.1, cy) as f64)
                    })
                    .collect();
                spearman_of(&pairs)
            });
            let gamma_w = batched(400, per, |rng, m| {
                let pairs: Vec<(f64, f64)> = (0..m)
                    .map(|_| {
                        let (u, r) = latent_obs(cfg, rng);
                        (
                            ordinal_psr(categorize(u.0 + r.0, cx), u.0, cx),
                            ordinal_psr(categorize(u.1 + r.1, cy), u.1, cy),
                        )
                    })
                    .collect();
                pearson(&pairs)
            });
            let icc = |axis: usize, base: u64| {
                batched(base, per / 2, move |rng, m| {
                    let pairs: Vec<(f64, f64)> = (0..m)
                        .map(|_| {
                            let (u, r1) = latent_obs(cfg, rng);
                            let r2 = normal_pair(rng, rw, 1.0, 1.0);
                            if axis == 0 {
                                (categorize(u.0 + r1.0, cx) as f64, categorize(u.0 + r2.0, cx) as f64)
                            } else {
                                (categorize(u.1 + r1.1, cy) as f64, categorize(u.1 + r2.1, cy) as f64)
                            }
                        })
                        .collect();
                    pair_rank_icc(&pairs)
                })
            };
            TrueValues {
                gamma_t,
                gamma_b,
                gamma_w,
                icc_x: icc(0, 100),
                icc_y: icc(1, 200),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ClusterSize;

    #[test]
    fn arcsin_values() {
        assert_eq!(arcsin_rank(0.0), 0.0);
        assert!((arcsin_rank(1.0) - 1.0).abs() < 1e-15);
        assert!((arcsin_rank(-1.0) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pair_icc_of_independent_members_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs: Vec<(f64, f64)> = (0..20_000)
            .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        assert!(pair_rank_icc(&pairs).abs() < 0.03);
        let same: Vec<(f64, f64)> = pairs.iter().map(|&(a, _)| (a, a)).collect();
        assert!((pair_rank_icc(&same) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ordinal_psr_bounds() {
        let c = ordinal_cutoffs(5, 0.0, 2.0);
        assert!((ordinal_psr(0, -50.0, &c) - 0.0).abs() < 1e-12);
        assert!(ordinal_psr(0, 0.0, &c) < -0.5);
        assert!(ordinal_psr(4, 0.0, &c) > 0.5);
    }

    #[test]
    fn small_budget_rejected() {
        let cfg = ScenarioConfig::new(Scenario::III, 0.8, 0.7, 10, ClusterSize::Fixed(5));
        assert!(true_values(&cfg, Some(10)).is_err());
    }
}
