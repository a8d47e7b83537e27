//! Variance of the total rank correlation.
//!
//! `γ_t` is a smooth functional of the joint distribution through the
//! moments `θ_ab = E[F*_X(X) F*_Y(Y)]`, `θ_aa`, `θ_bb` (the means of `F*` are
//! identically 1/2). Each moment is a V-statistic of order three, so its
//! influence at `(x, y)` is
//!
//! ```text
//! IF_ab = a·b + E[h(x, X)·b(Y)] + E[a(X)·h(y, Y)] − 3θ_ab
//! ```
//!
//! with `h(x, X) = 1{x < X} + ½·1{x = X}`, the contribution of a point at `x`
//! to `F*(X)`. Observation influences are summed within clusters with their
//! weights, and the cluster totals are treated as independent.

use super::bootstrap::{cluster_bootstrap, BootstrapOptions};
use super::{make_inference, CiOptions, Inference};
use crate::dataset::{compute_weights, Axis, ClusteredDataset, WeightScheme, WeightVector};
use crate::error::{Error, Result};
use crate::estimators::InferenceMethod;
use crate::rankcore::{mid_values, total_spearman};
use crate::scalar::{count, lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaTVarianceMethod {
    Resample(BootstrapOptions),
    Influence,
}

/// `E_w[h(key_j, K) · v(K)]` for every observation `j`.
fn upper_mid_sums<T: Scalar>(keys: &[T], weights: &[T], vals: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![T::zero(); keys.len()];
    let mut above = T::zero();
    let mut end = order.len();
    while end > 0 {
        let v = keys[order[end - 1]];
        let mut start = end;
        let mut tie = T::zero();
        while start > 0 && keys[order[start - 1]] == v {
            start -= 1;
            tie = tie + weights[order[start]] * vals[order[start]];
        }
        let s = above + tie * lit(0.5);
        for &k in &order[start..end] {
            out[k] = s;
        }
        above = above + tie;
        end = start;
    }
    out
}

/// Point estimate and per-cluster influence totals `L_i = Σ_j w_ij IF_ij`.
pub fn gamma_t_influence<T: Scalar>(ds: &ClusteredDataset<T>, w: &WeightVector<T>) -> Result<(T, Vec<T>)> {
    let gamma = total_spearman(ds, w)?;
    let wt = w.weights();
    let a = mid_values(ds, Axis::X, w)?;
    let b = mid_values(ds, Axis::Y, w)?;
    let (kx, ky) = (ds.keys(Axis::X), ds.keys(Axis::Y));

    let quarter = lit::<T>(0.25);
    let three = lit::<T>(3.0);
    let two = lit::<T>(2.0);
    let theta = |f: &dyn Fn(usize) -> T| (0..wt.len()).map(|j| wt[j] * f(j)).sum::<T>();
    let t_ab = theta(&|j| a[j] * b[j]);
    let t_aa = theta(&|j| a[j] * a[j]);
    let t_bb = theta(&|j| b[j] * b[j]);
    let (da, db) = (t_aa - quarter, t_bb - quarter);
    if !(da > T::zero()) || !(db > T::zero()) {
        return Err(Error::Degenerate("zero rank variance".into()));
    }
    let root = (da * db).sqrt();

    let hx_b = upper_mid_sums(&kx, wt, &b);
    let hy_a = upper_mid_sums(&ky, wt, &a);
    let hx_a = upper_mid_sums(&kx, wt, &a);
    let hy_b = upper_mid_sums(&ky, wt, &b);

    let half_gamma = gamma * lit(0.5);
    let offsets = ds.offsets();
    let mut contrib = Vec::with_capacity(ds.n_clusters());
    for span in offsets.windows(2) {
        let mut li = T::zero();
        for j in span[0]..span[1] {
            let if_ab = a[j] * b[j] + hx_b[j] + hy_a[j] - three * t_ab;
            let if_aa = a[j] * a[j] + two * hx_a[j] - three * t_aa;
            let if_bb = b[j] * b[j] + two * hy_b[j] - three * t_bb;
            let if_g = if_ab / root - half_gamma * (if_aa / da + if_bb / db);
            li = li + wt[j] * if_g;
        }
        contrib.push(li);
    }
    Ok((gamma, contrib))
}

/// Standard error and interval for the total rank correlation.
pub fn var_gamma_t<T: Scalar>(
    ds: &ClusteredDataset<T>,
    w: &WeightVector<T>,
    method: GammaTVarianceMethod,
    opts: &CiOptions,
) -> Result<Inference<T>> {
    match method {
        GammaTVarianceMethod::Influence => {
            let (gamma, l) = gamma_t_influence(ds, w)?;
            let n = count::<T>(l.len());
            if l.len() < 2 {
                return Err(Error::InvalidDataset("need at least 2 clusters".into()));
            }
            let var = n / (n - T::one()) * l.iter().map(|&v| v * v).sum::<T>();
            Ok(make_inference(gamma, var.sqrt(), opts, InferenceMethod::Influence))
        }
        GammaTVarianceMethod::Resample(boot) => {
            let scheme = w.scheme();
            if scheme == WeightScheme::Custom {
                return Err(Error::Unsupported(
                    "resampling custom weights is not defined; use a named scheme".into(),
                ));
            }
            let comps = cluster_bootstrap(ds, 1, &boot, |r| {
                vec![compute_weights(r, scheme).and_then(|rw| total_spearman(r, &rw))]
            })?;
            comps[0].inference(opts, boot.max_failure_rate)
        }
    }
}
