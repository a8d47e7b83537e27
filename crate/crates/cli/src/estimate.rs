use std::path::{Path, PathBuf};
use std::time::Instant;

use rankcorr::{
    analyze, load_csv, parse_levels, Analysis, AnalysisOptions, BootstrapOptions, CiMethod, CiOptions, CsvSchema,
    Dataset, Error, EstimatorKind, InferenceMethod, LinkFunction, PsrMode, WeightScheme,
};
use serde::Serialize;

use crate::args::EstimateArgs;
use crate::manifest::{ensure_dir, write_json, InputDigest, RunManifest};
use crate::CliError;

/// Options after defaults are applied; recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateOptions {
    pub input: PathBuf,
    pub cluster: String,
    pub x: String,
    pub y: String,
    pub x_levels: Option<Vec<String>>,
    pub y_levels: Option<Vec<String>>,
    pub link: LinkFunction,
    pub weights: &'static str,
    pub ci: String,
    pub boot_reps: usize,
    pub level: f64,
    pub seed: u64,
    pub psr: PsrMode,
    pub out: PathBuf,
}

pub(crate) fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

pub(crate) fn parse_link(s: Option<&str>) -> Result<LinkFunction, CliError> {
    s.unwrap_or("probit").parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

pub(crate) fn parse_weights(s: Option<&str>) -> Result<(WeightScheme, &'static str), CliError> {
    match s.unwrap_or("cluster") {
        "cluster" => Ok((WeightScheme::EqualCluster, "cluster")),
        "obs" => Ok((WeightScheme::EqualObservation, "obs")),
        other => Err(CliError::Usage(format!("unknown weights `{other}` (expected cluster or obs)"))),
    }
}

pub(crate) fn parse_psr(s: Option<&str>) -> Result<PsrMode, CliError> {
    match s.unwrap_or("cpm") {
        "cpm" => Ok(PsrMode::Cpm),
        "nonparametric" => Ok(PsrMode::Nonparametric),
        other => Err(CliError::Usage(format!("unknown psr `{other}` (expected cpm or nonparametric)"))),
    }
}

/// Maps the `--ci` choice to the core method and whether the bootstrap may
/// stand in for a missing analytic interval.
pub(crate) fn parse_ci(s: Option<&str>) -> Result<(CiMethod, bool, String), CliError> {
    let name = s.unwrap_or("auto");
    let (m, fallback) = match name {
        "auto" => (CiMethod::Analytic, true),
        "analytic" => (CiMethod::Analytic, false),
        "bootstrap" => (CiMethod::Bootstrap, false),
        "none" => (CiMethod::None, false),
        other => {
            return Err(CliError::Usage(format!(
                "unknown ci `{other}` (expected auto, analytic, bootstrap or none)"
            )))
        }
    };
    Ok((m, fallback, name.to_string()))
}

pub(crate) fn parse_level(level: Option<f64>) -> Result<f64, CliError> {
    let level = level.unwrap_or(0.95);
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::Usage(format!("--level must lie in (0, 1), got {level}")));
    }
    Ok(level)
}

fn resolve(a: EstimateArgs) -> Result<(EstimateOptions, AnalysisOptions<f64>), CliError> {
    let (scheme, weights) = parse_weights(a.weights.as_deref())?;
    let (ci, fallback, ci_name) = parse_ci(a.ci.as_deref())?;
    let psr = parse_psr(a.psr.as_deref())?;
    let link = parse_link(a.link.as_deref())?;
    let level = parse_level(a.level)?;
    let boot_reps = a.boot_reps.unwrap_or(1000);
    if boot_reps < 2 && ci != CiMethod::None {
        return Err(CliError::Usage("--boot-reps must be at least 2".into()));
    }
    if ci_name == "analytic" {
        if scheme != WeightScheme::EqualCluster {
            return Err(CliError::Usage(
                "analytic intervals for gamma_w and gamma_b need --weights cluster; \
                 use --ci bootstrap for observation weights"
                    .into(),
            ));
        }
        if psr == PsrMode::Nonparametric {
            return Err(CliError::Usage(
                "no analytic interval exists for nonparametric residuals; use --ci bootstrap".into(),
            ));
        }
    }
    let opts = EstimateOptions {
        input: required(a.input, "input")?,
        cluster: required(a.cluster, "cluster")?,
        x: required(a.x, "x")?,
        y: required(a.y, "y")?,
        x_levels: a.x_levels.as_deref().map(parse_levels),
        y_levels: a.y_levels.as_deref().map(parse_levels),
        link,
        weights,
        ci: ci_name,
        boot_reps,
        level,
        seed: a.seed.unwrap_or(0),
        psr,
        out: required(a.out, "out")?,
    };
    let core = AnalysisOptions {
        link,
        weights: scheme,
        psr,
        ci,
        ci_options: CiOptions {
            level,
            ..CiOptions::default()
        },
        bootstrap: BootstrapOptions {
            reps: boot_reps,
            seed: opts.seed,
            ..BootstrapOptions::default()
        },
        bootstrap_fallback: fallback,
        naive: true,
        ..AnalysisOptions::default()
    };
    Ok((opts, core))
}

fn load(opts: &EstimateOptions, content: &[u8]) -> Result<Dataset, CliError> {
    let schema = CsvSchema {
        cluster: opts.cluster.clone(),
        x: opts.x.clone(),
        y: opts.y.clone(),
        x_levels: opts.x_levels.clone(),
        y_levels: opts.y_levels.clone(),
    };
    load_csv(content, &schema).map_err(|e| {
        let hint = match &e {
            Error::Parse { column, message, .. } if message.ends_with("is not a declared level") => {
                let raw = message.split('`').nth(1).unwrap_or("");
                raw.parse::<f64>()
                    .is_ok()
                    .then(|| format!("; column `{column}` looks numeric, drop its level list"))
            }
            _ => None,
        };
        CliError::Data(format!("{e}{}", hint.unwrap_or_default()))
    })
}

#[derive(Debug, Serialize)]
pub struct Row {
    pub estimator: String,
    pub value: Option<f64>,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub method: Option<&'static str>,
}

#[derive(Debug, Serialize)]
struct FailureOut {
    estimator: &'static str,
    message: String,
    numerical: bool,
}

#[derive(Debug, Serialize)]
struct DataInfo {
    clusters: usize,
    observations: usize,
    x_kind: &'static str,
    y_kind: &'static str,
}

#[derive(Debug, Serialize)]
struct Report {
    level: f64,
    estimates: Vec<Row>,
    failures: Vec<FailureOut>,
    notes: Vec<String>,
    data: DataInfo,
}

fn method_name(m: Option<InferenceMethod>) -> Option<&'static str> {
    m.map(|m| match m {
        InferenceMethod::Sandwich => "sandwich",
        InferenceMethod::Influence => "influence",
        InferenceMethod::Bootstrap => "bootstrap",
    })
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn rows(a: &Analysis<f64>) -> Vec<Row> {
    let mut out: Vec<Row> = EstimatorKind::ALL
        .iter()
        .map(|&k| match a.get(k) {
            Some(e) => Row {
                estimator: k.key().into(),
                value: finite(e.value),
                se: e.se.and_then(finite),
                ci_lo: e.ci.map(|c| c.lo),
                ci_hi: e.ci.map(|c| c.hi),
                method: method_name(e.inference),
            },
            None => Row {
                estimator: k.key().into(),
                value: None,
                se: None,
                ci_lo: None,
                ci_hi: None,
                method: None,
            },
        })
        .collect();
    for (axis, icc) in [("x", &a.icc_x), ("y", &a.icc_y)] {
        let point = |name: &str, v: Option<f64>| Row {
            estimator: format!("{name}_{axis}"),
            value: v.and_then(finite),
            se: None,
            ci_lo: None,
            ci_hi: None,
            method: None,
        };
        out.push(point("rank_icc", icc.as_ref().map(|i| i.gamma_i)));
        out.push(point("d_hat", icc.as_ref().map(|i| i.d_hat)));
    }
    out
}

fn write_csv(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut text = String::from("estimator,value,se,ci_lo,ci_hi,method\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.estimator,
            cell(r.value),
            cell(r.se),
            cell(r.ci_lo),
            cell(r.ci_hi),
            r.method.unwrap_or("")
        ));
    }
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn kind_name(ordinal: bool) -> &'static str {
    if ordinal {
        "ordinal"
    } else {
        "numeric"
    }
}

pub fn run(args: EstimateArgs) -> Result<String, CliError> {
    let started = Instant::now();
    let (opts, core) = resolve(args)?;
    let content = std::fs::read(&opts.input)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", opts.input.display())))?;
    let digest = InputDigest::of(&opts.input, &content);
    let ds = load(&opts, &content)?;
    let analysis = analyze(&ds, &core)?;

    let rows = rows(&analysis);
    let report = Report {
        level: opts.level,
        failures: analysis
            .failures
            .iter()
            .map(|f| FailureOut {
                estimator: f.kind.key(),
                message: f.message.clone(),
                numerical: f.numerical,
            })
            .collect(),
        notes: analysis.notes.clone(),
        data: DataInfo {
            clusters: ds.n_clusters(),
            observations: ds.n_obs(),
            x_kind: kind_name(opts.x_levels.is_some()),
            y_kind: kind_name(opts.y_levels.is_some()),
        },
        estimates: rows,
    };

    ensure_dir(&opts.out)?;
    write_json(&opts.out.join("estimates.json"), &report)?;
    write_csv(&opts.out.join("estimates.csv"), &report.estimates)?;
    for n in &report.notes {
        eprintln!("note: {n}");
    }
    for f in &report.failures {
        eprintln!("warning: {} failed: {}", f.estimator, f.message);
    }
    RunManifest::new("estimate", opts.seed, &opts, Some(digest), started).write(&opts.out)?;

    let core_failures: Vec<_> = analysis
        .failures
        .iter()
        .filter(|f| !matches!(f.kind, EstimatorKind::NaiveBetween | EstimatorKind::NaiveWithin))
        .collect();
    if let Some(f) = core_failures.iter().find(|f| f.numerical) {
        return Err(CliError::Numerical(format!("{} failed: {}", f.kind.key(), f.message)));
    }
    if let Some(f) = core_failures.first() {
        return Err(CliError::Data(format!("{} failed: {}", f.kind.key(), f.message)));
    }

    let show = |k: EstimatorKind| {
        analysis
            .get(k)
            .map(|e| format!("{}={:.4}", k.key(), e.value))
            .unwrap_or_else(|| format!("{}=NA", k.key()))
    };
    Ok(format!(
        "{} clusters, {} obs: {} {} {} {}; wrote {}",
        ds.n_clusters(),
        ds.n_obs(),
        show(EstimatorKind::Total),
        show(EstimatorKind::WithinPsr),
        show(EstimatorKind::BetweenMedian),
        show(EstimatorKind::BetweenApprox),
        opts.out.display()
    ))
}
