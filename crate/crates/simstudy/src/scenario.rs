//! Data-generating scenarios.
//!
//! Every scenario starts from a bivariate normal cluster effect `U` and
//! within-cluster deviations `R`, then maps them to observations.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rankcorr::scalar::norm_quantile;
use rankcorr::{Cluster, ClusteredDataset, ObservedValue, VariableKind};
use serde::{Deserialize, Serialize};

use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scenario {
    /// `x = U_X + R_X`, `y = U_Y + R_Y`.
    I,
    /// Scenario I with `y` exponentiated.
    II,
    /// `x = exp(U_X) + R_X`, `y = exp(exp(U_Y) + R_Y)`.
    III,
    /// Two members per cluster, `U + R` and `U − R`, giving a negative ICC.
    NegativePairs,
    /// Scenario I cut into `levels` equiprobable ordered categories.
    Ordinal { levels: u32 },
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::I => f.write_str("I"),
            Scenario::II => f.write_str("II"),
            Scenario::III => f.write_str("III"),
            Scenario::NegativePairs => f.write_str("negpairs"),
            Scenario::Ordinal { levels } => write!(f, "ordinal{levels}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "i" | "1" => Ok(Scenario::I),
            "ii" | "2" => Ok(Scenario::II),
            "iii" | "3" => Ok(Scenario::III),
            "negpairs" | "negative_pairs" => Ok(Scenario::NegativePairs),
            other => other
                .strip_prefix("ordinal")
                .and_then(|l| l.parse::<u32>().ok())
                .map(|levels| Scenario::Ordinal { levels })
                .ok_or_else(|| SimError::InvalidConfig(format!("unknown scenario `{s}`"))),
        }
    }
}

impl TryFrom<String> for Scenario {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self, SimError> {
        s.parse()
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ClusterSize {
    Fixed(usize),
    /// Drawn uniformly from `min..=max` for each cluster.
    Uniform { min: usize, max: usize },
}

impl ClusterSize {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            ClusterSize::Fixed(k) => k,
            ClusterSize::Uniform { min, max } => rng.random_range(min..=max),
        }
    }

    fn min(&self) -> usize {
        match *self {
            ClusterSize::Fixed(k) => k,
            ClusterSize::Uniform { min, .. } => min,
        }
    }
}

impl fmt::Display for ClusterSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterSize::Fixed(k) => write!(f, "{k}"),
            ClusterSize::Uniform { min, max } => write!(f, "{min}:{max}"),
        }
    }
}

impl FromStr for ClusterSize {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        let bad = || SimError::InvalidConfig(format!("cluster size `{s}` is not `k` or `min:max`"));
        match s.split_once(':') {
            None => s.trim().parse().map(ClusterSize::Fixed).map_err(|_| bad()),
            Some((a, b)) => {
                let min: usize = a.trim().parse().map_err(|_| bad())?;
                let max: usize = b.trim().parse().map_err(|_| bad())?;
                if min > max {
                    return Err(bad());
                }
                Ok(if min == max {
                    ClusterSize::Fixed(min)
                } else {
                    ClusterSize::Uniform { min, max }
                })
            }
        }
    }
}

impl TryFrom<String> for ClusterSize {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self, SimError> {
        s.parse()
    }
}

impl From<ClusterSize> for String {
    fn from(c: ClusterSize) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Latent between-cluster Pearson correlation.
    pub rho_b: f64,
    /// Latent within-cluster Pearson correlation.
    pub rho_w: f64,
    pub n: usize,
    pub cluster_size: ClusterSize,
    #[serde(default = "default_mean_u")]
    pub mean_u: (f64, f64),
    #[serde(default)]
    pub seed: u64,
}

fn default_mean_u() -> (f64, f64) {
    (1.0, -1.0)
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, rho_b: f64, rho_w: f64, n: usize, cluster_size: ClusterSize) -> Self {
        let cluster_size = match scenario {
            Scenario::NegativePairs => ClusterSize::Fixed(2),
            _ => cluster_size,
        };
        Self {
            scenario,
            rho_b,
            rho_w,
            n,
            cluster_size,
            mean_u: default_mean_u(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        for (name, r) in [("rho_b", self.rho_b), ("rho_w", self.rho_w)] {
            if !(r.abs() <= 1.0) {
                return bad(format!("{name} = {r} is outside [-1, 1]"));
            }
        }
        if !(self.mean_u.0.is_finite() && self.mean_u.1.is_finite()) {
            return bad("mean_u must be finite".into());
        }
        if self.n < 2 {
            return bad(format!("need at least 2 clusters, got {}", self.n));
        }
        if self.cluster_size.min() < 1 {
            return bad("cluster sizes must be at least 1".into());
        }
        match self.scenario {
            Scenario::NegativePairs if self.cluster_size != ClusterSize::Fixed(2) => {
                bad(format!("negpairs requires cluster size 2, got {}", self.cluster_size))
            }
            Scenario::Ordinal { levels } if levels < 2 => bad(format!("ordinal scenario needs at least 2 levels, got {levels}")),
            _ => Ok(()),
        }
    }
}

/// Unobserved draws behind one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCluster {
    pub u: (f64, f64),
    pub r: Vec<(f64, f64)>,
}

/// Correlated standard-normal pair scaled to standard deviations `(sx, sy)`.
pub(crate) fn normal_pair<R: Rng + ?Sized>(rng: &mut R, rho: f64, sx: f64, sy: f64) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    (sx * z1, sy * (rho * z1 + (1.0 - rho * rho).max(0.0).sqrt() * z2))
}

/// Draws a cluster effect and one deviation per member.
pub(crate) fn draw_cluster<R: Rng + ?Sized>(cfg: &ScenarioConfig, k: usize, rng: &mut R) -> LatentCluster {
    let (ux, uy) = normal_pair(rng, cfg.rho_b, 1.0, 1.0);
    let u = (ux + cfg.mean_u.0, uy + cfg.mean_u.1);
    let r = match cfg.scenario {
        Scenario::NegativePairs => {
            let s = 3f64.sqrt();
            let d = normal_pair(rng, cfg.rho_w, s, s);
            vec![d, (-d.0, -d.1)]
        }
        _ => (0..k).map(|_| normal_pair(rng, cfg.rho_w, 1.0, 1.0)).collect(),
    };
    LatentCluster { u, r }
}

/// Draws the latent structure of a whole dataset.
pub fn generate_latent<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Vec<LatentCluster> {
    (0..cfg.n)
        .map(|_| {
            let k = cfg.cluster_size.draw(rng);
            draw_cluster(cfg, k, rng)
        })
        .collect()
}

/// Cutoffs splitting `N(mean, var)` into `levels` equiprobable intervals.
pub fn ordinal_cutoffs(levels: u32, mean: f64, var: f64) -> Vec<f64> {
    (1..levels)
        .map(|l| mean + var.sqrt() * norm_quantile(l as f64 / levels as f64))
        .collect()
}

/// Zero-based category of `v` given ascending cutoffs.
pub fn categorize(v: f64, cutoffs: &[f64]) -> u32 {
    cutoffs.partition_point(|&c| c < v) as u32
}

/// Maps latent draws to the observed scale of the scenario.
pub fn observe(cfg: &ScenarioConfig, latent: &[LatentCluster]) -> ClusteredDataset<f64> {
    let ordinal = match cfg.scenario {
        Scenario::Ordinal { levels } => Some((
            levels,
            ordinal_cutoffs(levels, cfg.mean_u.0, 2.0),
            ordinal_cutoffs(levels, cfg.mean_u.1, 2.0),
        )),
        _ => None,
    };
    let clusters = latent
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (ux, uy) = c.u;
            let observations = c
                .r
                .iter()
                .map(|&(rx, ry)| match (&ordinal, cfg.scenario) {
                    (Some((_, cx, cy)), _) => (
                        ObservedValue::Ordinal(categorize(ux + rx, cx)),
                        ObservedValue::Ordinal(categorize(uy + ry, cy)),
                    ),
                    (None, Scenario::II) => (ObservedValue::Numeric(ux + rx), ObservedValue::Numeric((uy + ry).exp())),
                    (None, Scenario::III) => (
                        ObservedValue::Numeric(ux.exp() + rx),
                        ObservedValue::Numeric((uy.exp() + ry).exp()),
                    ),
                    (None, _) => (ObservedValue::Numeric(ux + rx), ObservedValue::Numeric(uy + ry)),
                })
                .collect();
            Cluster {
                id: format!("c{i}"),
                observations,
            }
        })
        .collect();
    let kind = match &ordinal {
        Some((levels, _, _)) => VariableKind::Ordinal {
            levels: (1..=*levels).map(|l| l.to_string()).collect(),
        },
        None => VariableKind::Numeric,
    };
    ClusteredDataset::new(clusters, kind.clone(), kind).expect("generated clusters are valid")
}

/// Draws one dataset from the scenario.
pub fn generate<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> ClusteredDataset<f64> {
    observe(cfg, &generate_latent(cfg, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parse_round_trip() {
        for s in [
            Scenario::I,
            Scenario::II,
            Scenario::III,
            Scenario::NegativePairs,
            Scenario::Ordinal { levels: 5 },
        ] {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
        assert_eq!("1:50".parse::<ClusterSize>().unwrap(), ClusterSize::Uniform { min: 1, max: 50 });
        assert_eq!("20".parse::<ClusterSize>().unwrap(), ClusterSize::Fixed(20));
        assert!("5:2".parse::<ClusterSize>().is_err());
        assert!("ordinalx".parse::<Scenario>().is_err());
    }

    #[test]
    fn validation() {
        let ok = ScenarioConfig::new(Scenario::I, 0.8, 0.7, 10, ClusterSize::Fixed(5));
        assert!(ok.validate().is_ok());
        assert!(ScenarioConfig { rho_b: 1.2, ..ok }.validate().is_err());
        assert!(ScenarioConfig { n: 1, ..ok }.validate().is_err());
        assert!(ScenarioConfig {
            cluster_size: ClusterSize::Fixed(0),
            ..ok
        }
        .validate()
        .is_err());
        let pairs = ScenarioConfig {
            scenario: Scenario::NegativePairs,
            cluster_size: ClusterSize::Fixed(3),
            ..ok
        };
        assert!(pairs.validate().is_err());
        assert_eq!(
            ScenarioConfig::new(Scenario::NegativePairs, 0.0, 0.0, 10, ClusterSize::Fixed(9)).cluster_size,
            ClusterSize::Fixed(2)
        );
    }

    #[test]
    fn cutoffs_are_equiprobable() {
        let c = ordinal_cutoffs(5, 1.0, 2.0);
        assert_eq!(c.len(), 4);
        assert!((c[1] - (1.0 + 2f64.sqrt() * norm_quantile(0.4))).abs() < 1e-12);
        assert_eq!(categorize(-10.0, &c), 0);
        assert_eq!(categorize(10.0, &c), 4);
        assert_eq!(categorize(1.0, &c), 2);
    }

    #[test]
    fn uniform_sizes_stay_in_range() {
        let cfg = ScenarioConfig::new(Scenario::I, 0.0, 0.0, 500, ClusterSize::Uniform { min: 1, max: 50 });
        let ds = generate(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let sizes = ds.cluster_sizes();
        assert!(sizes.iter().all(|&k| (1..=50).contains(&k)));
        assert!(sizes.contains(&1) && sizes.contains(&50));
    }
}
