//! Weighted mid-CDFs and the rank statistics built directly on them: the
//! total Spearman correlation, the rank ICC and its finite-cluster correction.

use crate::dataset::{Axis, ClusteredDataset, ObservedValue, WeightVector};
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Weighted step-function CDF evaluated on its support.
#[derive(Debug, Clone, PartialEq)]
pub struct MidCdf<T> {
    support: Vec<T>,
    cdf: Vec<T>,
    cdf_left: Vec<T>,
}

impl<T: Scalar> MidCdf<T> {
    pub fn support(&self) -> &[T] {
        &self.support
    }

    pub fn cdf(&self) -> &[T] {
        &self.cdf
    }

    pub fn cdf_left(&self) -> &[T] {
        &self.cdf_left
    }

    /// `F*` at each support point.
    pub fn mid(&self) -> Vec<T> {
        self.cdf.iter().zip(&self.cdf_left).map(|(&f, &l)| (f + l) * lit(0.5)).collect()
    }

    /// `(F(v), F(v-), F*(v))` at an arbitrary point.
    pub fn eval(&self, v: T) -> (T, T, T) {
        let pos = self.support.partition_point(|s| *s < v);
        let (f, left) = if pos < self.support.len() && self.support[pos] == v {
            (self.cdf[pos], self.cdf_left[pos])
        } else if pos == 0 {
            (T::zero(), T::zero())
        } else {
            (self.cdf[pos - 1], self.cdf[pos - 1])
        };
        (f, left, (f + left) * lit(0.5))
    }
}

/// Builds the weighted mid-CDF of `keys` and also returns `F*` at every
/// input position.
pub fn mid_cdf_with_values<T: Scalar>(keys: &[T], weights: &[T]) -> Result<(MidCdf<T>, Vec<T>)> {
    if keys.len() != weights.len() {
        return Err(Error::LengthMismatch {
            what: "values and weights",
            left: keys.len(),
            right: weights.len(),
        });
    }
    if keys.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap_or(std::cmp::Ordering::Equal));

    let total: T = weights.iter().copied().sum();
    let mut support = Vec::new();
    let mut cdf = Vec::new();
    let mut cdf_left = Vec::new();
    let mut values = vec![T::zero(); keys.len()];
    let mut below = T::zero();
    let mut start = 0;
    while start < order.len() {
        let v = keys[order[start]];
        let mut end = start;
        let mut mass = T::zero();
        while end < order.len() && keys[order[end]] == v {
            mass = mass + weights[order[end]];
            end += 1;
        }
        let upto = below + mass;
        let (f, l) = if end == order.len() {
            (T::one(), below / total)
        } else {
            (upto / total, below / total)
        };
        let mid = (f + l) * lit(0.5);
        for &k in &order[start..end] {
            values[k] = mid;
        }
        support.push(v);
        cdf.push(f);
        cdf_left.push(l);
        below = upto;
        start = end;
    }
    Ok((MidCdf { support, cdf, cdf_left }, values))
}

/// Weighted mid-CDF of a list of observed values.
pub fn weighted_mid_cdf<T: Scalar>(values: &[ObservedValue<T>], weights: &WeightVector<T>) -> Result<MidCdf<T>> {
    let keys: Vec<T> = values.iter().map(ObservedValue::key).collect();
    mid_cdf_with_values(&keys, weights.weights()).map(|(m, _)| m)
}

/// `F*` of one variable at every observation, in flattened cluster order.
/// Errors if the variable is constant.
pub fn mid_values<T: Scalar>(ds: &ClusteredDataset<T>, axis: Axis, w: &WeightVector<T>) -> Result<Vec<T>> {
    let (m, v) = mid_cdf_with_values(&ds.keys(axis), w.weights())?;
    if m.support.len() < 2 {
        return Err(Error::Degenerate(format!("{axis:?} is constant")));
    }
    Ok(v)
}

/// Weighted Pearson correlation with weighted-mean centering.
pub fn weighted_pearson<T: Scalar>(a: &[T], b: &[T], w: &[T]) -> Result<T> {
    if a.len() != b.len() || a.len() != w.len() {
        return Err(Error::LengthMismatch {
            what: "correlation inputs",
            left: a.len(),
            right: b.len().max(w.len()),
        });
    }
    let total: T = w.iter().copied().sum();
    let ma = a.iter().zip(w).map(|(&x, &wi)| wi * x).sum::<T>() / total;
    let mb = b.iter().zip(w).map(|(&x, &wi)| wi * x).sum::<T>() / total;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for ((&x, &y), &wi) in a.iter().zip(b).zip(w) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + wi * dx * dy;
        saa = saa + wi * dx * dx;
        sbb = sbb + wi * dy * dy;
    }
    let tiny = T::epsilon() * T::epsilon();
    if !(saa > tiny) || !(sbb > tiny) {
        return Err(Error::Degenerate("zero weighted variance".into()));
    }
    Ok(clamp_unit(sab / (saa * sbb).sqrt()))
}

pub(crate) fn clamp_unit<T: Scalar>(v: T) -> T {
    v.max(-T::one()).min(T::one())
}

/// Plug-in total Spearman correlation: weighted Pearson correlation of the
/// weighted mid-CDF values of `x` and `y`.
pub fn total_spearman<T: Scalar>(ds: &ClusteredDataset<T>, w: &WeightVector<T>) -> Result<T> {
    let a = mid_values(ds, Axis::X, w)?;
    let b = mid_values(ds, Axis::Y, w)?;
    weighted_pearson(&a, &b, w.weights())
}

/// Rank intraclass correlation of one variable with its finite-cluster
/// correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankIccEstimate<T> {
    pub gamma_i: T,
    pub d_hat: T,
    /// Weighted within-cluster pair covariance about the grand mean.
    pub numerator: T,
    /// Weighted pair covariance about the cluster means (numerator of `D`).
    pub d_numerator: T,
    /// Weighted total variance of the mid-CDF values.
    pub denominator: T,
}

/// Rank ICC and `D` from precomputed mid-CDF values.
///
/// `mids` is flattened in cluster order and delimited by `offsets`.
pub fn rank_icc_from_mids<T: Scalar>(
    mids: &[T],
    offsets: &[usize],
    weights: &[T],
    cluster_weights: &[T],
) -> Result<RankIccEstimate<T>> {
    if mids.len() != weights.len() {
        return Err(Error::LengthMismatch {
            what: "mid-CDF values and weights",
            left: mids.len(),
            right: weights.len(),
        });
    }
    let total: T = weights.iter().copied().sum();
    let grand = mids.iter().zip(weights).map(|(&a, &w)| w * a).sum::<T>() / total;
    let denominator = mids
        .iter()
        .zip(weights)
        .map(|(&a, &w)| w * (a - grand) * (a - grand))
        .sum::<T>()
        / total;
    if !(denominator > T::epsilon() * T::epsilon()) {
        return Err(Error::Degenerate("variable is constant".into()));
    }

    let mut numerator = T::zero();
    let mut d_numerator = T::zero();
    let mut paired = false;
    for (i, span) in offsets.windows(2).enumerate() {
        let k = span[1] - span[0];
        if k < 2 {
            continue;
        }
        paired = true;
        let block = &mids[span[0]..span[1]];
        let kt: T = crate::scalar::count(k);
        let pair_scale = lit::<T>(2.0) / (kt * (kt - T::one()));

        // Σ_{j<j'} b_j b_j' = ((Σ b)² − Σ b²) / 2
        let (mut s, mut s2) = (T::zero(), T::zero());
        let mut csum = T::zero();
        for &a in block {
            let b = a - grand;
            s = s + b;
            s2 = s2 + b * b;
            csum = csum + a;
        }
        numerator = numerator + cluster_weights[i] * pair_scale * (s * s - s2) * lit(0.5);

        // Deviations from the cluster mean sum to zero, so the pair sum is −Σd²/2.
        let cmean = csum / kt;
        let dd: T = block.iter().map(|&a| (a - cmean) * (a - cmean)).sum();
        d_numerator = d_numerator - cluster_weights[i] * pair_scale * dd * lit(0.5);
    }
    if !paired {
        return Err(Error::Degenerate("rank ICC needs a cluster with at least 2 observations".into()));
    }
    let numerator = numerator / total;
    let d_numerator = d_numerator / total;
    Ok(RankIccEstimate {
        gamma_i: numerator / denominator,
        d_hat: d_numerator / denominator,
        numerator,
        d_numerator,
        denominator,
    })
}

/// Rank ICC of one variable of the dataset.
pub fn rank_icc<T: Scalar>(ds: &ClusteredDataset<T>, axis: Axis, w: &WeightVector<T>) -> Result<RankIccEstimate<T>> {
    let mids = mid_values(ds, axis, w)?;
    rank_icc_from_mids(&mids, &ds.offsets(), w.weights(), w.cluster_weights())
}

/// Finite-cluster correction `D̂`; zero when every cluster is a singleton.
pub fn d_correction<T: Scalar>(ds: &ClusteredDataset<T>, axis: Axis, w: &WeightVector<T>) -> Result<T> {
    if ds.clusters().iter().all(|c| c.len() < 2) {
        mid_values(ds, axis, w)?;
        return Ok(T::zero());
    }
    rank_icc(ds, axis, w).map(|r| r.d_hat)
}

/// Midranks (1-based, ties averaged).
pub fn midranks<T: Scalar>(v: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let r = lit::<T>((start + end + 1) as f64 * 0.5);
        for &k in &order[start..end] {
            ranks[k] = r;
        }
        start = end;
    }
    ranks
}

/// Classical tie-corrected Spearman correlation (Pearson on midranks).
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "spearman inputs",
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("spearman needs at least 2 pairs".into()));
    }
    let w = vec![T::one(); x.len()];
    weighted_pearson(&midranks(x), &midranks(y), &w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{compute_weights, WeightScheme};

    fn ds(groups: Vec<Vec<(f64, f64)>>) -> ClusteredDataset<f64> {
        ClusteredDataset::from_numeric(groups.into_iter().enumerate().map(|(i, g)| (format!("c{i}"), g))).unwrap()
    }

    #[test]
    fn midcdf_hand_values() {
        let (m, v) = mid_cdf_with_values(&[1.0, 2.0, 2.0], &[1.0 / 3.0; 3]).unwrap();
        assert!((v[1] - 2.0_f64 / 3.0).abs() < 1e-15);
        assert_eq!(m.eval(0.5), (0.0, 0.0, 0.0));
        assert_eq!(m.eval(7.0).0, 1.0);
        assert_eq!(m.eval(1.5).0, m.eval(1.5).1);
        let (_, single) = mid_cdf_with_values(&[5.0], &[1.0]).unwrap();
        assert_eq!(single, vec![0.5]);
    }

    #[test]
    fn perfect_concordance_is_one() {
        let d = ds(vec![vec![(1.0, 10.0), (2.0, 11.0)], vec![(3.0, 20.0), (4.0, 30.0), (5.0, 31.0)]]);
        for s in [WeightScheme::EqualCluster, WeightScheme::EqualObservation] {
            let w = compute_weights(&d, s).unwrap();
            assert!((total_spearman(&d, &w).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_variable_is_degenerate() {
        let d = ds(vec![vec![(1.0, 1.0), (2.0, 1.0)], vec![(3.0, 1.0)]]);
        let w = compute_weights(&d, WeightScheme::EqualCluster).unwrap();
        assert!(matches!(total_spearman(&d, &w), Err(Error::Degenerate(_))));
        assert!(rank_icc(&d, Axis::Y, &w).is_err());
    }

    #[test]
    fn d_correction_single_cluster_by_enumeration() {
        // values (1,2,3), weights 1/3: F* = (1/6, 1/2, 5/6), cluster mean 1/2,
        // pair products about the mean: (-1/3)(0) + (-1/3)(1/3) + 0 = -1/9,
        // scaled by 2/(3·2) = 1/3 -> -1/27. Denominator: (1/9 + 0 + 1/9)/3 = 2/27.
        let d = ds(vec![vec![(1.0, 0.0), (2.0, 1.0), (3.0, 2.0)]]);
        let w = compute_weights(&d, WeightScheme::EqualObservation).unwrap();
        let dh = d_correction(&d, Axis::X, &w).unwrap();
        assert!((dh - (-0.5)).abs() < 1e-14);
    }

    #[test]
    fn singletons_give_zero_d() {
        let d = ds(vec![vec![(1.0, 0.0)], vec![(2.0, 1.0)], vec![(3.0, 3.0)]]);
        let w = compute_weights(&d, WeightScheme::EqualCluster).unwrap();
        assert_eq!(d_correction(&d, Axis::X, &w).unwrap(), 0.0);
        assert!(rank_icc(&d, Axis::X, &w).is_err());
    }

    #[test]
    fn constant_within_distinct_between_icc_one() {
        let d = ds((0..6).map(|i| vec![(i as f64, 0.0); 4].into_iter().enumerate().map(|(j, (x, _))| (x, j as f64)).collect()).collect());
        let w = compute_weights(&d, WeightScheme::EqualCluster).unwrap();
        let r = rank_icc(&d, Axis::X, &w).unwrap();
        assert!((r.gamma_i - 1.0).abs() < 1e-12);
        assert_eq!(r.d_hat, 0.0);
    }

    #[test]
    fn spearman_with_ties() {
        let x = [1.0, 2.0, 2.0, 3.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        let r = spearman(&x, &y).unwrap();
        // midranks x: 1, 2.5, 2.5, 4; y: 1, 3, 2, 4
        let expect = 4.5 / (4.5_f64 * 5.0).sqrt();
        assert!((r - expect).abs() < 1e-14);
    }
}
