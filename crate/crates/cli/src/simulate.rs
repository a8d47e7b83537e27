use std::time::Instant;

use rankcorr::CiMethod;
use rankcorr_sim::{
    applicable_estimators, run_study, ClusterSize, Scenario, ScenarioConfig, SimError, StudyConfig,
};

use crate::args::SimulateArgs;
use crate::estimate::{parse_ci, parse_level, parse_link, parse_psr, parse_weights};
use crate::manifest::{ensure_dir, RunManifest};
use crate::CliError;

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(m) => CliError::Usage(m),
            SimError::TooManyFailures { .. } => CliError::Numerical(e.to_string()),
            SimError::Core(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn parse_mean_u(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("--mean-u expects `mx,my`, got `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn resolve(a: &SimulateArgs) -> Result<StudyConfig, CliError> {
    let base = StudyConfig::default();
    let scenario: Scenario = match &a.scenario {
        Some(s) => s.parse().map_err(|e: SimError| CliError::Usage(e.to_string()))?,
        None => base.design.scenario,
    };
    let default_k = if scenario == Scenario::NegativePairs {
        ClusterSize::Fixed(2)
    } else {
        base.design.cluster_size
    };
    let cluster_size = match &a.k {
        Some(k) => k.parse().map_err(|e: SimError| CliError::Usage(e.to_string()))?,
        None => default_k,
    };
    let design = ScenarioConfig {
        scenario,
        rho_b: a.rho_b.unwrap_or(base.design.rho_b),
        rho_w: a.rho_w.unwrap_or(base.design.rho_w),
        n: a.n.unwrap_or(base.design.n),
        cluster_size,
        mean_u: match &a.mean_u {
            Some(s) => parse_mean_u(s)?,
            None => base.design.mean_u,
        },
        seed: a.seed.unwrap_or(0),
    };
    let (ci, fallback, _) = parse_ci(a.ci.as_deref())?;
    let cfg = StudyConfig {
        design,
        reps: a.reps.unwrap_or(base.reps),
        link: parse_link(a.link.as_deref())?,
        weights: parse_weights(a.weights.as_deref())?.0,
        ci,
        psr: parse_psr(a.psr.as_deref())?,
        level: parse_level(a.level)?,
        boot_reps: a.boot_reps.unwrap_or(base.boot_reps),
        bootstrap_fallback: fallback && ci == CiMethod::Analytic,
        mc_size: a.mc_size,
        estimators: applicable_estimators(scenario),
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: SimulateArgs) -> Result<String, CliError> {
    let started = Instant::now();
    let out = args
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("missing required option --out".into()))?;
    let cfg = resolve(&args)?;
    let report = run_study(&cfg)?;

    ensure_dir(&out)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    std::fs::write(out.join("study.csv"), csv)?;
    let mut json = report.to_json()?;
    json.push('\n');
    std::fs::write(out.join("study.json"), json)?;
    RunManifest::new("simulate", cfg.design.seed, &cfg, None, started).write(&out)?;

    for r in &report.rows {
        if r.failures > 0 {
            eprintln!("warning: {} failed in {} of {} replicates", r.estimator, r.failures, report.reps);
        }
    }
    Ok(format!(
        "scenario {} (rho_b={}, rho_w={}), {} reps: wrote {}",
        cfg.design.scenario,
        cfg.design.rho_b,
        cfg.design.rho_w,
        report.reps,
        out.display()
    ))
}
