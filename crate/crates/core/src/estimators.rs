//! Point estimators of the total, within- and between-cluster rank
//! correlations, and the naive comparators.

use serde::{Deserialize, Serialize};

use crate::dataset::{Axis, ClusteredDataset, WeightScheme, WeightVector};
use crate::error::{Error, Result};
use crate::rankcore::{clamp_unit, mid_cdf_with_values, spearman, weighted_pearson, RankIccEstimate};
use crate::scalar::{lit, sort_scalars, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Total,
    WithinPsr,
    BetweenMedian,
    BetweenApprox,
    NaiveBetween,
    NaiveWithin,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        Self::Total,
        Self::WithinPsr,
        Self::BetweenMedian,
        Self::BetweenApprox,
        Self::NaiveBetween,
        Self::NaiveWithin,
    ];

    /// Short identifier used in reports.
    pub fn key(self) -> &'static str {
        match self {
            Self::Total => "gamma_t",
            Self::WithinPsr => "gamma_w",
            Self::BetweenMedian => "gamma_b_median",
            Self::BetweenApprox => "gamma_b_approx",
            Self::NaiveBetween => "naive_between",
            Self::NaiveWithin => "naive_within",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.key() == key)
    }
}

/// How the standard error and interval of an estimate were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMethod {
    Sandwich,
    Influence,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval<T> {
    pub lo: T,
    pub hi: T,
    pub level: f64,
}

impl<T: Scalar> ConfidenceInterval<T> {
    pub fn contains(&self, v: T) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate<T> {
    pub value: T,
    pub se: Option<T>,
    pub ci: Option<ConfidenceInterval<T>>,
    pub method: EstimatorKind,
    /// Set when the raw value fell outside `[-1, 1]` and was truncated.
    pub clipped: bool,
    /// Weight scheme the estimate was computed under, if any.
    pub scheme: Option<WeightScheme>,
    pub inference: Option<InferenceMethod>,
}

impl<T: Scalar> CorrelationEstimate<T> {
    pub fn point(value: T, method: EstimatorKind, scheme: Option<WeightScheme>) -> Self {
        Self {
            value,
            se: None,
            ci: None,
            method,
            clipped: false,
            scheme,
            inference: None,
        }
    }

    pub fn with_inference(mut self, se: T, ci: ConfidenceInterval<T>, how: InferenceMethod) -> Self {
        self.se = Some(se);
        self.ci = Some(ci);
        self.inference = Some(how);
        self
    }
}

/// Total rank correlation as a tagged estimate.
pub fn gamma_t<T: Scalar>(ds: &ClusteredDataset<T>, w: &WeightVector<T>) -> Result<CorrelationEstimate<T>> {
    let v = crate::rankcore::total_spearman(ds, w)?;
    Ok(CorrelationEstimate::point(v, EstimatorKind::Total, Some(w.scheme())))
}

/// Within-cluster correlation: weighted Pearson correlation of the residuals.
pub fn gamma_w<T: Scalar>(psr_x: &[T], psr_y: &[T], w: &WeightVector<T>) -> Result<CorrelationEstimate<T>> {
    let v = weighted_pearson(psr_x, psr_y, w.weights())
        .map_err(|e| match e {
            Error::Degenerate(_) => Error::Degenerate("residuals have zero weighted variance".into()),
            other => other,
        })?;
    Ok(CorrelationEstimate::point(v, EstimatorKind::WithinPsr, Some(w.scheme())))
}

/// Between-cluster correlation from the cluster coefficients: weighted
/// correlation of their cluster-weighted mid-CDF values.
pub fn gamma_b_median<T: Scalar>(
    beta_x: &[T],
    beta_y: &[T],
    cluster_weights: &[T],
    scheme: Option<WeightScheme>,
) -> Result<CorrelationEstimate<T>> {
    if beta_x.len() != beta_y.len() || beta_x.len() != cluster_weights.len() {
        return Err(Error::LengthMismatch {
            what: "cluster coefficients",
            left: beta_x.len(),
            right: beta_y.len().max(cluster_weights.len()),
        });
    }
    if beta_x.len() < 2 {
        return Err(Error::Degenerate("need at least 2 clusters".into()));
    }
    let (mx, fx) = mid_cdf_with_values(beta_x, cluster_weights)?;
    let (my, fy) = mid_cdf_with_values(beta_y, cluster_weights)?;
    if mx.support().len() < 2 || my.support().len() < 2 {
        return Err(Error::Degenerate("all cluster coefficients are equal".into()));
    }
    let v = weighted_pearson(&fx, &fy, cluster_weights)?;
    Ok(CorrelationEstimate::point(v, EstimatorKind::BetweenMedian, scheme))
}

/// Raw approximation-based between-cluster value and whether it was clipped.
pub fn gamma_b_approx_value<T: Scalar>(gamma_t: T, gamma_w: T, icc_x: T, icc_y: T, d_x: T, d_y: T) -> Result<(T, bool)> {
    let between = (icc_x - d_x) * (icc_y - d_y);
    let within = (T::one() - icc_x + d_x) * (T::one() - icc_y + d_y);
    if !(between > T::zero()) || !between.is_finite() {
        return Err(Error::Unstable(format!(
            "rank ICC terms give a nonpositive radicand ({between})"
        )));
    }
    if within < T::zero() {
        return Err(Error::Unstable(format!("within-cluster radicand is negative ({within})")));
    }
    let raw = (gamma_t - within.sqrt() * gamma_w) / between.sqrt();
    let clipped = raw.abs() > T::one();
    Ok((clamp_unit(raw), clipped))
}

/// Between-cluster correlation by inverting the decomposition of the total
/// correlation. All inputs must come from the same weight scheme.
pub fn gamma_b_approx<T: Scalar>(
    gamma_t: &CorrelationEstimate<T>,
    gamma_w: &CorrelationEstimate<T>,
    icc_x: &RankIccEstimate<T>,
    icc_y: &RankIccEstimate<T>,
    icc_scheme: WeightScheme,
) -> Result<CorrelationEstimate<T>> {
    for (name, s) in [("gamma_t", gamma_t.scheme), ("gamma_w", gamma_w.scheme)] {
        if s != Some(icc_scheme) {
            return Err(Error::SchemeMismatch(format!(
                "{name} computed under {s:?}, rank ICCs under {icc_scheme:?}"
            )));
        }
    }
    let (v, clipped) = gamma_b_approx_value(
        gamma_t.value,
        gamma_w.value,
        icc_x.gamma_i,
        icc_y.gamma_i,
        icc_x.d_hat,
        icc_y.d_hat,
    )?;
    let mut est = CorrelationEstimate::point(v, EstimatorKind::BetweenApprox, Some(icc_scheme));
    est.clipped = clipped;
    Ok(est)
}

/// Sample median; midpoint of the central pair for even sizes.
pub fn median<T: Scalar>(values: &mut [T]) -> T {
    sort_scalars(values);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        (values[k / 2 - 1] + values[k / 2]) * lit(0.5)
    }
}

fn cluster_medians<T: Scalar>(ds: &ClusteredDataset<T>, axis: Axis) -> Vec<T> {
    ds.clusters()
        .iter()
        .map(|c| median(&mut c.keys(axis).collect::<Vec<_>>()))
        .collect()
}

/// Spearman correlation of the sample cluster medians.
pub fn naive_between<T: Scalar>(ds: &ClusteredDataset<T>) -> Result<CorrelationEstimate<T>> {
    if ds.n_clusters() < 3 {
        return Err(Error::Degenerate(format!(
            "naive between-cluster correlation needs at least 3 clusters, found {}",
            ds.n_clusters()
        )));
    }
    let v = spearman(&cluster_medians(ds, Axis::X), &cluster_medians(ds, Axis::Y))?;
    Ok(CorrelationEstimate::point(v, EstimatorKind::NaiveBetween, None))
}

/// Spearman correlation of deviations from the sample cluster medians.
pub fn naive_within<T: Scalar>(ds: &ClusteredDataset<T>) -> Result<CorrelationEstimate<T>> {
    if ds.kind(Axis::X).is_ordinal() || ds.kind(Axis::Y).is_ordinal() {
        return Err(Error::Unsupported(
            "naive within-cluster correlation needs numeric outcomes".into(),
        ));
    }
    let dev = |axis: Axis| -> Vec<T> {
        let med = cluster_medians(ds, axis);
        ds.clusters()
            .iter()
            .zip(med)
            .flat_map(|(c, m)| c.keys(axis).map(move |v| v - m))
            .collect()
    };
    let v = spearman(&dev(Axis::X), &dev(Axis::Y))?;
    Ok(CorrelationEstimate::point(v, EstimatorKind::NaiveWithin, None))
}
