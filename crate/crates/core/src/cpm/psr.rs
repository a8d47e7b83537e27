use super::fit::{bounds, CpmFit};
use crate::dataset::{Axis, ClusteredDataset};
use crate::error::{Error, Result};
use crate::scalar::{count, lit, Scalar};

/// Probability-scale residual `F(x | i) + F(x− | i) − 1` under the fitted
/// model. Single-observation clusters use the nonparametric value 0.
pub fn psr_from_cpm<T: Scalar>(fit: &CpmFit<T>, cluster_id: &str, value: T) -> Result<T> {
    let i = fit
        .cluster_index(cluster_id)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown cluster `{cluster_id}`")))?;
    let c = fit
        .category_of(value)
        .ok_or_else(|| Error::InvalidArgument(format!("value {value} is outside the fitted support")))?;
    Ok(psr_cell(fit, i, c))
}

#[inline]
pub(crate) fn psr_cell<T: Scalar>(fit: &CpmFit<T>, cluster: usize, category: usize) -> T {
    if fit.cluster_sizes[cluster] == 1 {
        return T::zero();
    }
    let (l, u) = bounds(&fit.alpha, fit.beta[cluster], category);
    fit.link.cdf(u) - fit.link.sf(l)
}

/// Model-based residuals of every observation, in flattened cluster order.
pub fn psr_all<T: Scalar>(fit: &CpmFit<T>) -> Vec<T> {
    fit.obs_cluster
        .iter()
        .zip(&fit.obs_category)
        .map(|(&i, &c)| psr_cell(fit, i as usize, c as usize))
        .collect()
}

/// Residuals `2F*_i(x) − 1` from each cluster's own unweighted mid-CDF.
pub fn psr_nonparametric<T: Scalar>(ds: &ClusteredDataset<T>, axis: Axis) -> Vec<T> {
    let mut out = Vec::with_capacity(ds.n_obs());
    for c in ds.clusters() {
        let keys: Vec<T> = c.keys(axis).collect();
        let k = count::<T>(keys.len());
        for &v in &keys {
            let (mut below, mut equal) = (0usize, 0usize);
            for &u in &keys {
                if u < v {
                    below += 1;
                } else if u == v {
                    equal += 1;
                }
            }
            // 2F* − 1 = (2·below + equal − k)/k
            out.push((lit::<T>(2.0) * count::<T>(below) + count::<T>(equal) - k) / k);
        }
    }
    out
}

/// Cluster coefficients `(0, β̂_2, …, β̂_n)`: cluster medians on the latent
/// scale when the link is symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianCoefficients<T> {
    pub values: Vec<T>,
    /// False for loglog/cloglog, where `g(1/2) ≠ 0` and the coefficients are
    /// only location shifts, not medians.
    pub median_identity_holds: bool,
}

impl<T> MedianCoefficients<T> {
    pub fn warning(&self) -> Option<&'static str> {
        (!self.median_identity_holds)
            .then_some("asymmetric link: coefficients are location shifts, not cluster medians")
    }
}

pub fn cluster_median_coeffs<T: Scalar>(fit: &CpmFit<T>) -> MedianCoefficients<T> {
    MedianCoefficients {
        values: fit.beta.clone(),
        median_identity_holds: fit.link.is_symmetric(),
    }
}
