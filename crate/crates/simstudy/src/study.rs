//! Monte Carlo study runner.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rankcorr::{
    analyze, AnalysisOptions, BootstrapOptions, CiMethod, CiOptions, EstimatorKind, LinkFunction, PsrMode,
    TotalVariance, WeightScheme,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scenario::{generate, ClusterSize, Scenario, ScenarioConfig};
use crate::truth::{true_values, TrueValues, Truth};
use crate::SimError;

/// Largest tolerated fraction of failed replicates per estimator.
pub const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    #[serde(flatten)]
    pub design: ScenarioConfig,
    pub reps: usize,
    pub link: LinkFunction,
    pub weights: WeightScheme,
    pub ci: CiMethod,
    pub psr: PsrMode,
    pub level: f64,
    /// Resamples per replicate when intervals come from the bootstrap.
    pub boot_reps: usize,
    /// Bootstrap estimators whose analytic interval is unavailable. Off by
    /// default because it multiplies the cost of a replicate.
    pub bootstrap_fallback: bool,
    pub mc_size: Option<usize>,
    pub estimators: Vec<EstimatorKind>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            design: ScenarioConfig::new(Scenario::I, 0.8, 0.7, 100, ClusterSize::Fixed(20)),
            reps: 100,
            link: LinkFunction::Probit,
            weights: WeightScheme::EqualCluster,
            ci: CiMethod::Analytic,
            psr: PsrMode::Cpm,
            level: 0.95,
            boot_reps: 200,
            bootstrap_fallback: false,
            mc_size: None,
            estimators: EstimatorKind::ALL.to_vec(),
        }
    }
}

impl StudyConfig {
    /// Study of every estimator applicable to the scenario.
    pub fn new(design: ScenarioConfig, reps: usize) -> Self {
        Self {
            design,
            reps,
            estimators: applicable_estimators(design.scenario),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.design.validate()?;
        if self.reps == 0 {
            return Err(SimError::InvalidConfig("reps must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(SimError::InvalidConfig(format!("level {} is not in (0, 1)", self.level)));
        }
        if self.ci == CiMethod::Bootstrap && self.boot_reps < 2 {
            return Err(SimError::InvalidConfig("boot_reps must be at least 2".into()));
        }
        if self.estimators.is_empty() {
            return Err(SimError::InvalidConfig("no estimators requested".into()));
        }
        if let Some(k) = self
            .estimators
            .iter()
            .find(|k| !applicable_estimators(self.design.scenario).contains(k))
        {
            return Err(SimError::InvalidConfig(format!(
                "{} is not defined for scenario {}",
                k.key(),
                self.design.scenario
            )));
        }
        Ok(())
    }

    fn analysis_options(&self, rep: usize) -> AnalysisOptions<f64> {
        AnalysisOptions {
            link: self.link,
            weights: self.weights,
            psr: self.psr,
            ci: self.ci,
            ci_options: CiOptions {
                level: self.level,
                ..CiOptions::default()
            },
            bootstrap: BootstrapOptions {
                reps: self.boot_reps,
                seed: replicate_seed(self.design.seed, rep),
                ..BootstrapOptions::default()
            },
            total_variance: TotalVariance::Influence,
            bootstrap_fallback: self.bootstrap_fallback,
            naive: self
                .estimators
                .iter()
                .any(|k| matches!(k, EstimatorKind::NaiveBetween | EstimatorKind::NaiveWithin)),
            ..AnalysisOptions::default()
        }
    }
}

/// Estimators defined for the data a scenario produces. The naive within
/// estimator subtracts medians and needs numeric outcomes.
pub fn applicable_estimators(scenario: Scenario) -> Vec<EstimatorKind> {
    EstimatorKind::ALL
        .into_iter()
        .filter(|&k| !(matches!(scenario, Scenario::Ordinal { .. }) && k == EstimatorKind::NaiveWithin))
        .collect()
}

/// Seed for work nested inside replicate `rep`.
fn replicate_seed(seed: u64, rep: usize) -> u64 {
    seed ^ (rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Generator of replicate `rep`; one ChaCha stream per replicate.
pub fn replicate_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
struct Draw {
    value: f64,
    se: Option<f64>,
    ci: Option<(f64, f64)>,
}

struct Replicate {
    values: Vec<(EstimatorKind, Result<Draw, String>)>,
    icc: [Option<f64>; 2],
}

fn run_replicate(cfg: &StudyConfig, rep: usize) -> Replicate {
    let mut rng = replicate_rng(cfg.design.seed, rep);
    let ds = generate(&cfg.design, &mut rng);
    match analyze(&ds, &cfg.analysis_options(rep)) {
        Ok(a) => Replicate {
            values: cfg
                .estimators
                .iter()
                .map(|&k| {
                    let r = match a.get(k) {
                        Some(e) => Ok(Draw {
                            value: e.value,
                            se: e.se,
                            ci: e.ci.map(|c| (c.lo, c.hi)),
                        }),
                        None => Err(a
                            .failures
                            .iter()
                            .find(|f| f.kind == k)
                            .map_or_else(|| "not computed".to_string(), |f| f.message.clone())),
                    };
                    (k, r)
                })
                .collect(),
            icc: [a.icc_x.map(|i| i.gamma_i), a.icc_y.map(|i| i.gamma_i)],
        },
        Err(e) => Replicate {
            values: cfg.estimators.iter().map(|&k| (k, Err(e.to_string()))).collect(),
            icc: [None, None],
        },
    }
}

/// One line of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub estimator: String,
    pub truth: f64,
    pub truth_mc_se: Option<f64>,
    pub mean: f64,
    pub bias: f64,
    /// Standard deviation of the estimates; undefined for a single replicate.
    pub emp_se: Option<f64>,
    pub mdn_se: Option<f64>,
    pub coverage: Option<f64>,
    /// Replicates that produced an estimate.
    pub n_ok: usize,
    pub failures: usize,
    /// Failure messages and their counts.
    pub census: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: StudyConfig,
    pub truth: TrueValues,
    pub reps: usize,
    pub rows: Vec<ReportRow>,
}

impl SimulationReport {
    pub fn row(&self, key: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.estimator == key)
    }

    pub fn estimator(&self, kind: EstimatorKind) -> Option<&ReportRow> {
        self.row(kind.key())
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "estimator",
            "truth",
            "truth_mc_se",
            "mean",
            "bias",
            "emp_se",
            "mdn_se",
            "coverage",
            "n_ok",
            "failures",
        ])?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        for r in &self.rows {
            w.write_record([
                r.estimator.clone(),
                r.truth.to_string(),
                opt(r.truth_mc_se),
                r.mean.to_string(),
                r.bias.to_string(),
                opt(r.emp_se),
                opt(r.mdn_se),
                opt(r.coverage),
                r.n_ok.to_string(),
                r.failures.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, SimError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

fn summarize(
    estimator: &str,
    truth: Truth,
    draws: &[Result<Draw, String>],
    reps: usize,
) -> Result<ReportRow, SimError> {
    let ok: Vec<&Draw> = draws.iter().filter_map(|d| d.as_ref().ok()).collect();
    let mut census = BTreeMap::new();
    for e in draws.iter().filter_map(|d| d.as_ref().err()) {
        *census.entry(e.clone()).or_insert(0) += 1;
    }
    let failures = reps - ok.len();
    if failures as f64 > MAX_FAILURE_RATE * reps as f64 || ok.is_empty() {
        return Err(SimError::TooManyFailures {
            estimator: estimator.to_string(),
            failed: failures,
            reps,
            census: census
                .iter()
                .map(|(m, c)| format!("{c}x {m}"))
                .collect::<Vec<_>>()
                .join("; "),
        });
    }
    let n = ok.len() as f64;
    let mean = ok.iter().map(|d| d.value).sum::<f64>() / n;
    let emp_se = (ok.len() > 1)
        .then(|| (ok.iter().map(|d| (d.value - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    let mdn_se = median(ok.iter().filter_map(|d| d.se).collect());
    let with_ci: Vec<(f64, f64)> = ok.iter().filter_map(|d| d.ci).collect();
    let coverage = (!with_ci.is_empty()).then(|| {
        with_ci.iter().filter(|(lo, hi)| *lo <= truth.value && truth.value <= *hi).count() as f64
            / with_ci.len() as f64
    });
    Ok(ReportRow {
        estimator: estimator.to_string(),
        truth: truth.value,
        truth_mc_se: truth.mc_se,
        mean,
        bias: mean - truth.value,
        emp_se,
        mdn_se,
        coverage,
        n_ok: ok.len(),
        failures,
        census,
    })
}

/// Runs `reps` replicates in parallel and aggregates them in replicate
/// order, so the report does not depend on the thread count.
pub fn run_study(cfg: &StudyConfig) -> Result<SimulationReport, SimError> {
    cfg.validate()?;
    let truth = true_values(&cfg.design, cfg.mc_size)?;
    let reps: Vec<Replicate> = (0..cfg.reps).into_par_iter().map(|r| run_replicate(cfg, r)).collect();

    let mut rows = Vec::new();
    for (j, &kind) in cfg.estimators.iter().enumerate() {
        let draws: Vec<Result<Draw, String>> = reps.iter().map(|r| r.values[j].1.clone()).collect();
        rows.push(summarize(kind.key(), truth.target(kind), &draws, cfg.reps)?);
    }
    for (axis, (key, t)) in [("rank_icc_x", truth.icc_x), ("rank_icc_y", truth.icc_y)]
        .into_iter()
        .enumerate()
    {
        let draws: Vec<Result<Draw, String>> = reps
            .iter()
            .map(|r| {
                r.icc[axis]
                    .map(|value| Draw {
                        value,
                        se: None,
                        ci: None,
                    })
                    .ok_or_else(|| "rank ICC unavailable".to_string())
            })
            .collect();
        rows.push(summarize(key, t, &draws, cfg.reps)?);
    }
    Ok(SimulationReport {
        config: cfg.clone(),
        truth,
        reps: cfg.reps,
        rows,
    })
}
