//! One-call estimation of every correlation with standard errors.
//!
//! Analytic intervals come from the stacked sandwich systems (within and
//! between) and the influence function (total). Whenever an analytic route
//! is unavailable the cluster bootstrap takes over for the affected
//! estimators only.

use serde::{Deserialize, Serialize};

use crate::cpm::{cluster_median_coeffs, fit_cpm, psr_all, psr_nonparametric, CpmFit, CpmOptions, LinkFunction};
use crate::dataset::{compute_weights, Axis, ClusteredDataset, WeightScheme, WeightVector};
use crate::error::{Error, Result};
use crate::estimators::{
    gamma_b_approx, gamma_b_median, gamma_t, gamma_w, naive_between, naive_within, CorrelationEstimate,
    EstimatorKind,
};
use crate::inference::{
    cluster_bootstrap, make_inference, var_gamma_t, BootstrapOptions, CiOptions, GammaTVarianceMethod, Inference,
    StackedContext,
};
use crate::rankcore::{rank_icc, RankIccEstimate};
use crate::scalar::Scalar;

/// Source of the probability-scale residuals entering the within-cluster
/// correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsrMode {
    #[default]
    Cpm,
    Nonparametric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// Sandwich and influence-function intervals, bootstrap where those do
    /// not apply.
    #[default]
    Analytic,
    Bootstrap,
    /// Point estimates only.
    None,
}

/// Variance route for the total correlation under [`CiMethod::Analytic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TotalVariance {
    #[default]
    Resample,
    Influence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions<T> {
    pub link: LinkFunction,
    pub weights: WeightScheme,
    pub psr: PsrMode,
    pub ci: CiMethod,
    pub ci_options: CiOptions,
    pub bootstrap: BootstrapOptions,
    pub total_variance: TotalVariance,
    /// Fall back to the bootstrap when an analytic interval is unavailable.
    /// When off, such estimators keep their point value without an interval,
    /// except a clipped approximation estimate, which keeps its sandwich SE.
    pub bootstrap_fallback: bool,
    /// Report the naive comparators.
    pub naive: bool,
    pub cpm: CpmOptions<T>,
}

impl<T: Scalar> Default for AnalysisOptions<T> {
    fn default() -> Self {
        Self {
            link: LinkFunction::Probit,
            weights: WeightScheme::EqualCluster,
            psr: PsrMode::Cpm,
            ci: CiMethod::Analytic,
            ci_options: CiOptions::default(),
            bootstrap: BootstrapOptions::default(),
            total_variance: TotalVariance::Resample,
            bootstrap_fallback: true,
            naive: true,
            cpm: CpmOptions::default(),
        }
    }
}

/// An estimator that produced no value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorFailure {
    pub kind: EstimatorKind,
    pub message: String,
    pub numerical: bool,
}

/// Fit summary of one CPM.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub categories: usize,
    pub iterations: usize,
    pub loglik: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Analysis<T> {
    pub estimates: Vec<CorrelationEstimate<T>>,
    pub failures: Vec<EstimatorFailure>,
    pub icc_x: Option<RankIccEstimate<T>>,
    pub icc_y: Option<RankIccEstimate<T>>,
    pub fit_x: Option<FitSummary>,
    pub fit_y: Option<FitSummary>,
    /// Interval fallbacks and model caveats.
    pub notes: Vec<String>,
}

impl<T: Scalar> Analysis<T> {
    pub fn get(&self, kind: EstimatorKind) -> Option<&CorrelationEstimate<T>> {
        self.estimates.iter().find(|e| e.method == kind)
    }
}

struct Points<T> {
    values: Vec<(EstimatorKind, Result<CorrelationEstimate<T>>)>,
    icc_x: Result<RankIccEstimate<T>>,
    icc_y: Result<RankIccEstimate<T>>,
    fits: Option<(CpmFit<T>, CpmFit<T>)>,
    fit_error: Option<Error>,
}

fn fit_pair<T: Scalar>(
    ds: &ClusteredDataset<T>,
    opts: &AnalysisOptions<T>,
) -> Result<(CpmFit<T>, CpmFit<T>)> {
    Ok((
        fit_cpm(ds, Axis::X, opts.link, &opts.cpm)?,
        fit_cpm(ds, Axis::Y, opts.link, &opts.cpm)?,
    ))
}

fn fit_failed<T>(e: &Error) -> Result<T> {
    Err(match e {
        Error::Separation { cluster, beta } => Error::Separation {
            cluster: cluster.clone(),
            beta: *beta,
        },
        Error::NonConvergence {
            iterations,
            gradient_norm,
        } => Error::NonConvergence {
            iterations: *iterations,
            gradient_norm: *gradient_norm,
        },
        Error::Degenerate(m) => Error::Degenerate(m.clone()),
        other => Error::Unstable(format!("model fit failed: {other}")),
    })
}

/// Point estimates of the requested estimators.
fn points<T: Scalar>(
    ds: &ClusteredDataset<T>,
    w: &WeightVector<T>,
    opts: &AnalysisOptions<T>,
    wanted: &[EstimatorKind],
) -> Points<T> {
    let want = |k| wanted.contains(&k);
    let needs_fit = want(EstimatorKind::BetweenMedian)
        || ((want(EstimatorKind::WithinPsr) || want(EstimatorKind::BetweenApprox)) && opts.psr == PsrMode::Cpm);
    let (fits, fit_error) = if needs_fit {
        match fit_pair(ds, opts) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e)),
        }
    } else {
        (None, None)
    };

    let gt = gamma_t(ds, w);
    let gw = if want(EstimatorKind::WithinPsr) || want(EstimatorKind::BetweenApprox) {
        match opts.psr {
            PsrMode::Nonparametric => gamma_w(
                &psr_nonparametric(ds, Axis::X),
                &psr_nonparametric(ds, Axis::Y),
                w,
            ),
            PsrMode::Cpm => match (&fits, &fit_error) {
                (Some((fx, fy)), _) => gamma_w(&psr_all(fx), &psr_all(fy), w),
                (None, Some(e)) => fit_failed(e),
                (None, None) => unreachable!(),
            },
        }
    } else {
        Err(Error::InvalidArgument("not requested".into()))
    };
    let icc_x = rank_icc(ds, Axis::X, w);
    let icc_y = rank_icc(ds, Axis::Y, w);

    let mut values = Vec::new();
    for &kind in wanted {
        let v = match kind {
            EstimatorKind::Total => clone_result(&gt),
            EstimatorKind::WithinPsr => clone_result(&gw),
            EstimatorKind::BetweenMedian => match (&fits, &fit_error) {
                (Some((fx, fy)), _) => gamma_b_median(
                    &cluster_median_coeffs(fx).values,
                    &cluster_median_coeffs(fy).values,
                    w.cluster_weights(),
                    Some(w.scheme()),
                ),
                (None, Some(e)) => fit_failed(e),
                (None, None) => unreachable!(),
            },
            EstimatorKind::BetweenApprox => match (&gt, &gw, &icc_x, &icc_y) {
                (Ok(t), Ok(wv), Ok(ix), Ok(iy)) => gamma_b_approx(t, wv, ix, iy, w.scheme()),
                (Err(e), ..) | (_, Err(e), ..) | (_, _, Err(e), _) | (_, _, _, Err(e)) => {
                    Err(Error::Unstable(format!("input unavailable: {e}")))
                }
            },
            EstimatorKind::NaiveBetween => naive_between(ds),
            EstimatorKind::NaiveWithin => naive_within(ds),
        };
        values.push((kind, v));
    }
    Points {
        values,
        icc_x,
        icc_y,
        fits,
        fit_error,
    }
}

fn clone_result<T: Scalar>(r: &Result<CorrelationEstimate<T>>) -> Result<CorrelationEstimate<T>> {
    match r {
        Ok(v) => Ok(v.clone()),
        Err(e) => Err(match e {
            Error::Degenerate(m) => Error::Degenerate(m.clone()),
            Error::Unsupported(m) => Error::Unsupported(m.clone()),
            other => Error::Unstable(other.to_string()),
        }),
    }
}

fn summarize<T: Scalar>(f: &CpmFit<T>) -> FitSummary {
    FitSummary {
        categories: f.n_categories(),
        iterations: f.iterations,
        loglik: crate::scalar::to_f64(f.loglik),
        gradient_norm: crate::scalar::to_f64(f.gradient_norm),
        converged: f.converged,
    }
}

/// Estimates every correlation on `ds` with intervals as configured.
pub fn analyze<T: Scalar>(ds: &ClusteredDataset<T>, opts: &AnalysisOptions<T>) -> Result<Analysis<T>> {
    ds.require_estimable()?;
    let w = compute_weights(ds, opts.weights)?;
    analyze_weighted(ds, &w, opts)
}

/// As [`analyze`] with explicit weights. Bootstrap intervals for custom
/// weights are unavailable because resampled weights are undefined.
pub fn analyze_weighted<T: Scalar>(
    ds: &ClusteredDataset<T>,
    w: &WeightVector<T>,
    opts: &AnalysisOptions<T>,
) -> Result<Analysis<T>> {
    ds.require_estimable()?;
    let mut wanted: Vec<EstimatorKind> = vec![
        EstimatorKind::Total,
        EstimatorKind::WithinPsr,
        EstimatorKind::BetweenMedian,
        EstimatorKind::BetweenApprox,
    ];
    if opts.naive {
        wanted.push(EstimatorKind::NaiveBetween);
        wanted.push(EstimatorKind::NaiveWithin);
    }
    let pts = points(ds, w, opts, &wanted);
    let mut notes = Vec::new();
    if let Some((fx, _)) = &pts.fits {
        if let Some(m) = cluster_median_coeffs(fx).warning() {
            notes.push(format!("{} link: {m}", opts.link));
        }
    }
    if let Some(e) = &pts.fit_error {
        notes.push(format!("model fit failed: {e}"));
    }

    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (kind, r) in pts.values {
        match r {
            Ok(v) => estimates.push(v),
            Err(e) => failures.push(EstimatorFailure {
                kind,
                message: e.to_string(),
                numerical: e.is_numerical(),
            }),
        }
    }

    // Intervals.
    let mut need_boot: Vec<EstimatorKind> = Vec::new();
    if opts.ci != CiMethod::None {
        let analytic = opts.ci == CiMethod::Analytic;
        let mut stacked: Option<std::result::Result<StackedContext<'_, T>, String>> = None;
        if analytic {
            if let Some((fx, fy)) = &pts.fits {
                stacked = Some(if w.is_equal_cluster(ds) {
                    StackedContext::new(fx, fy).map_err(|e| e.to_string())
                } else {
                    Err("analytic inference requires equal-cluster weights".into())
                });
            }
        }
        for est in estimates.iter_mut() {
            if !analytic {
                need_boot.push(est.method);
                continue;
            }
            let got: std::result::Result<Inference<T>, String> = match est.method {
                EstimatorKind::Total => {
                    let m = match opts.total_variance {
                        TotalVariance::Influence => GammaTVarianceMethod::Influence,
                        TotalVariance::Resample => GammaTVarianceMethod::Resample(opts.bootstrap),
                    };
                    var_gamma_t(ds, w, m, &opts.ci_options).map_err(|e| e.to_string())
                }
                EstimatorKind::WithinPsr if opts.psr == PsrMode::Nonparametric => {
                    Err("no analytic interval for nonparametric residuals".into())
                }
                EstimatorKind::WithinPsr => match &stacked {
                    Some(Ok(ctx)) => ctx
                        .gamma_w()
                        .map(|s| make_inference(est.value, s.se, &opts.ci_options, crate::InferenceMethod::Sandwich))
                        .map_err(|e| e.to_string()),
                    Some(Err(m)) => Err(m.clone()),
                    None => Err("model fit unavailable".into()),
                },
                EstimatorKind::BetweenMedian | EstimatorKind::BetweenApprox => match &stacked {
                    Some(Ok(ctx)) => {
                        if est.clipped && opts.bootstrap_fallback {
                            Err("approximation estimate was clipped at the boundary".into())
                        } else {
                            ctx.gamma_b()
                                .map(|s| {
                                    make_inference(est.value, s.se, &opts.ci_options, crate::InferenceMethod::Sandwich)
                                })
                                .map_err(|e| e.to_string())
                        }
                    }
                    Some(Err(m)) => Err(m.clone()),
                    None => Err("model fit unavailable".into()),
                },
                EstimatorKind::NaiveBetween | EstimatorKind::NaiveWithin => {
                    Err("no analytic interval for naive estimators".into())
                }
            };
            match got {
                Ok(inf) => *est = est.clone().with_inference(inf.se, inf.ci, inf.method),
                Err(reason) => {
                    let naive = matches!(est.method, EstimatorKind::NaiveBetween | EstimatorKind::NaiveWithin);
                    if opts.bootstrap_fallback {
                        if !naive {
                            notes.push(format!("{}: {reason}; using the cluster bootstrap", est.method.key()));
                        }
                        need_boot.push(est.method);
                    } else if !naive {
                        notes.push(format!("{}: {reason}; no interval", est.method.key()));
                    }
                }
            }
        }
    }

    if !need_boot.is_empty() {
        let scheme = w.scheme();
        if scheme == WeightScheme::Custom {
            notes.push("bootstrap unavailable for custom weights; some estimates have no interval".into());
        } else {
            let boot = cluster_bootstrap(ds, need_boot.len(), &opts.bootstrap, |r| {
                let rw = match compute_weights(r, scheme) {
                    Ok(rw) => rw,
                    Err(e) => return need_boot.iter().map(|_| Err(Error::Unstable(e.to_string()))).collect(),
                };
                points(r, &rw, opts, &need_boot)
                    .values
                    .into_iter()
                    .map(|(_, v)| v.map(|e| e.value))
                    .collect()
            });
            match boot {
                Ok(comps) => {
                    for (kind, comp) in need_boot.iter().zip(comps) {
                        let est = estimates.iter_mut().find(|e| e.method == *kind).expect("estimate present");
                        match comp.inference(&opts.ci_options, opts.bootstrap.max_failure_rate) {
                            Ok(inf) => *est = est.clone().with_inference(inf.se, inf.ci, inf.method),
                            Err(e) => notes.push(format!("{}: bootstrap failed: {e}", kind.key())),
                        }
                    }
                }
                Err(e) => notes.push(format!("bootstrap failed: {e}")),
            }
        }
    }

    let (fit_x, fit_y) = match &pts.fits {
        Some((fx, fy)) => (Some(summarize(fx)), Some(summarize(fy))),
        None => (None, None),
    };
    Ok(Analysis {
        estimates,
        failures,
        icc_x: pts.icc_x.ok(),
        icc_y: pts.icc_y.ok(),
        fit_x,
        fit_y,
        notes,
    })
}
