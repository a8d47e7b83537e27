use serde::Serialize;

use super::link::LinkFunction;
use super::structured::ArrowMatrix;
use crate::dataset::{Axis, ClusteredDataset};
use crate::error::{Error, Result};
use crate::scalar::{count, lit, to_f64, Scalar};

/// Solver settings for [`fit_cpm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpmOptions<T> {
    /// Converged once `max |gradient| <= gradient_tolerance`.
    pub gradient_tolerance: T,
    /// ... or once a full Newton step changes the log-likelihood by at most
    /// this fraction.
    pub loglik_tolerance: T,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Any `|β|` beyond this on the link scale is reported as separation.
    pub separation_bound: T,
    pub keep_trace: bool,
}

impl<T: Scalar> Default for CpmOptions<T> {
    fn default() -> Self {
        Self {
            gradient_tolerance: T::default_gradient_tolerance(),
            loglik_tolerance: lit(1e-12),
            max_iterations: 100,
            max_halvings: 40,
            separation_bound: lit(30.0),
            keep_trace: false,
        }
    }
}

/// Observations of one cluster falling in one outcome category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub cluster: u32,
    pub category: u32,
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loglik: f64,
    pub gradient_norm: f64,
    pub step_scale: f64,
}

/// Fitted cumulative probability model `G⁻¹(F(x | i)) = α(x) − β_i`.
#[derive(Debug, Clone)]
pub struct CpmFit<T> {
    pub link: LinkFunction,
    /// Distinct outcome values `x_(1) < … < x_(C)`.
    pub support: Vec<T>,
    /// `C − 1` strictly increasing intercepts.
    pub alpha: Vec<T>,
    /// One coefficient per cluster; the reference cluster holds 0.
    pub beta: Vec<T>,
    pub cluster_ids: Vec<String>,
    pub cluster_sizes: Vec<usize>,
    pub loglik: T,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: T,
    pub trace: Vec<IterationRecord>,
    /// Category of each observation, flattened in cluster order.
    pub obs_category: Vec<u32>,
    pub obs_cluster: Vec<u32>,
    /// Cells sorted by cluster, then category.
    pub cells: Vec<Cell>,
    /// Start of each cluster's cells in `cells`, plus a final end marker.
    pub cell_offsets: Vec<usize>,
}

/// Data layout shared by the fitter and the inference code.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub n_clusters: usize,
    pub n_categories: usize,
    pub cells: Vec<Cell>,
    pub cell_offsets: Vec<usize>,
}

impl Design {
    pub fn n_alpha(&self) -> usize {
        self.n_categories - 1
    }

    pub fn n_params(&self) -> usize {
        self.n_alpha() + self.n_clusters - 1
    }

    pub fn beta_index(&self, cluster: usize) -> Option<usize> {
        (cluster > 0).then(|| self.n_alpha() + cluster - 1)
    }
}

/// Latent interval `(l, u]` of a cell.
#[inline]
pub(crate) fn bounds<T: Scalar>(alpha: &[T], beta_i: T, category: usize) -> (T, T) {
    let u = if category < alpha.len() { alpha[category] - beta_i } else { T::infinity() };
    let l = if category > 0 { alpha[category - 1] - beta_i } else { T::neg_infinity() };
    (l, u)
}

pub(crate) fn split_theta<T: Scalar>(design: &Design, theta: &[T]) -> (Vec<T>, Vec<T>) {
    let m = design.n_alpha();
    let alpha = theta[..m].to_vec();
    let mut beta = Vec::with_capacity(design.n_clusters);
    beta.push(T::zero());
    beta.extend_from_slice(&theta[m..]);
    (alpha, beta)
}

fn feasible<T: Scalar>(alpha: &[T], beta: &[T]) -> bool {
    alpha.iter().chain(beta).all(|v| v.is_finite()) && alpha.windows(2).all(|w| w[0] < w[1])
}

pub(crate) fn loglik<T: Scalar>(design: &Design, link: LinkFunction, alpha: &[T], beta: &[T]) -> T {
    let mut ll = T::zero();
    for cell in &design.cells {
        let (l, u) = bounds(alpha, beta[cell.cluster as usize], cell.category as usize);
        let p = link.interval(l, u);
        if !(p > T::zero()) {
            return T::neg_infinity();
        }
        ll = ll + count::<T>(cell.count as usize) * p.ln();
    }
    ll
}

/// Log-likelihood, gradient and (optionally) the negative Hessian.
pub(crate) fn derivatives<T: Scalar>(
    design: &Design,
    link: LinkFunction,
    alpha: &[T],
    beta: &[T],
    want_information: bool,
) -> (T, Vec<T>, Option<ArrowMatrix<T>>) {
    let m = design.n_alpha();
    let mut grad = vec![T::zero(); design.n_params()];
    let mut info = want_information.then(|| ArrowMatrix::zeros(m, design.n_clusters - 1));
    let mut ll = T::zero();
    for i in 0..design.n_clusters {
        let b = design.beta_index(i);
        let mut coupling: Vec<(usize, T)> = Vec::new();
        let mut jbb = T::zero();
        for cell in &design.cells[design.cell_offsets[i]..design.cell_offsets[i + 1]] {
            let c = cell.category as usize;
            let w = count::<T>(cell.count as usize);
            let (l, u) = bounds(alpha, beta[i], c);
            let p = link.interval(l, u);
            let (fu, fl) = (link.pdf(u), link.pdf(l));
            ll = ll + w * p.ln();
            let (gu, gl) = (fu / p, fl / p);
            if c < m {
                grad[c] = grad[c] + w * gu;
            }
            if c > 0 {
                grad[c - 1] = grad[c - 1] - w * gl;
            }
            if let Some(bi) = b {
                grad[bi] = grad[bi] - w * (gu - gl);
            }
            let Some(info) = info.as_mut() else { continue };
            let (hu, hl) = (link.dpdf(u) / p, link.dpdf(l) / p);
            let diff = gu - gl;
            if c < m {
                info.t_diag[c] = info.t_diag[c] + w * (gu * gu - hu);
            }
            if c > 0 {
                info.t_diag[c - 1] = info.t_diag[c - 1] + w * (gl * gl + hl);
            }
            if c > 0 && c < m {
                info.t_off[c - 1] = info.t_off[c - 1] - w * gu * gl;
            }
            if b.is_some() {
                jbb = jbb + w * (diff * diff - (hu - hl));
                if c > 0 {
                    push_merge(&mut coupling, c - 1, w * (gl * diff - hl));
                }
                if c < m {
                    push_merge(&mut coupling, c, w * (hu - gu * diff));
                }
            }
        }
        if let (Some(info), Some(_)) = (info.as_mut(), b) {
            info.d[i - 1] = jbb;
            info.coupling[i - 1] = coupling;
        }
    }
    (ll, grad, info)
}

fn push_merge<T: Scalar>(v: &mut Vec<(usize, T)>, idx: usize, val: T) {
    match v.last_mut() {
        Some((last, acc)) if *last == idx => *acc = *acc + val,
        _ => v.push((idx, val)),
    }
}

impl<T: Scalar> CpmFit<T> {
    pub fn n_clusters(&self) -> usize {
        self.beta.len()
    }

    pub fn n_categories(&self) -> usize {
        self.support.len()
    }

    /// Free parameters: the intercepts followed by the non-reference
    /// coefficients.
    pub fn theta(&self) -> Vec<T> {
        let mut t = self.alpha.clone();
        t.extend_from_slice(&self.beta[1..]);
        t
    }

    pub(crate) fn design(&self) -> Design {
        Design {
            n_clusters: self.beta.len(),
            n_categories: self.support.len(),
            cells: self.cells.clone(),
            cell_offsets: self.cell_offsets.clone(),
        }
    }

    pub fn cluster_index(&self, id: &str) -> Option<usize> {
        self.cluster_ids.iter().position(|c| c == id)
    }

    /// Category index of an outcome value, if it is in the support.
    pub fn category_of(&self, value: T) -> Option<usize> {
        let pos = self.support.partition_point(|s| *s < value);
        (pos < self.support.len() && self.support[pos] == value).then_some(pos)
    }

    /// `(F(x_(c) − | i), F(x_(c) | i))` under the fitted model.
    pub fn conditional_cdf(&self, cluster: usize, category: usize) -> (T, T) {
        let (l, u) = bounds(&self.alpha, self.beta[cluster], category);
        (self.link.cdf(l), self.link.cdf(u))
    }

    /// Fitted cell probabilities of one cluster across all categories.
    pub fn cell_probabilities(&self, cluster: usize) -> Vec<T> {
        (0..self.n_categories())
            .map(|c| {
                let (l, u) = bounds(&self.alpha, self.beta[cluster], c);
                self.link.interval(l, u)
            })
            .collect()
    }

    /// Log-likelihood at an arbitrary parameter vector (layout of
    /// [`CpmFit::theta`]); `-inf` outside the parameter space.
    pub fn loglik_at(&self, theta: &[T]) -> T {
        let design = self.design();
        let (alpha, beta) = split_theta(&design, theta);
        if !feasible(&alpha, &beta) {
            return T::neg_infinity();
        }
        loglik(&design, self.link, &alpha, &beta)
    }

    /// Analytic gradient of the log-likelihood at `theta`.
    pub fn gradient_at(&self, theta: &[T]) -> Vec<T> {
        let design = self.design();
        let (alpha, beta) = split_theta(&design, theta);
        derivatives(&design, self.link, &alpha, &beta, false).1
    }

    /// Observed information (negative Hessian) at the fitted parameters.
    pub fn information(&self) -> ArrowMatrix<T> {
        let design = self.design();
        derivatives(&design, self.link, &self.alpha, &self.beta, true)
            .2
            .expect("information requested")
    }
}

/// Fits the CPM of one variable on cluster indicators.
pub fn fit_cpm<T: Scalar>(
    ds: &ClusteredDataset<T>,
    axis: Axis,
    link: LinkFunction,
    options: &CpmOptions<T>,
) -> Result<CpmFit<T>> {
    let ids: Vec<String> = ds.clusters().iter().map(|c| c.id.clone()).collect();
    fit_cpm_keys(&ds.keys(axis), &ds.cluster_of_obs(), ids, link, options)
}

/// Fits from flattened keys with their cluster indices (`0..ids.len()`).
/// Cluster 0 is the reference.
pub fn fit_cpm_keys<T: Scalar>(
    keys: &[T],
    obs_cluster: &[usize],
    cluster_ids: Vec<String>,
    link: LinkFunction,
    options: &CpmOptions<T>,
) -> Result<CpmFit<T>> {
    if keys.len() != obs_cluster.len() {
        return Err(Error::LengthMismatch {
            what: "values and cluster indices",
            left: keys.len(),
            right: obs_cluster.len(),
        });
    }
    let n = cluster_ids.len();
    if keys.is_empty() || n == 0 {
        return Err(Error::EmptyInput);
    }
    if keys.iter().any(|k| !k.is_finite()) {
        return Err(Error::InvalidDataset("non-finite outcome value".into()));
    }

    // Categories: one per distinct value.
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut support: Vec<T> = Vec::new();
    let mut obs_category = vec![0u32; keys.len()];
    for &k in &order {
        if support.last() != Some(&keys[k]) {
            support.push(keys[k]);
        }
        obs_category[k] = (support.len() - 1) as u32;
    }
    let n_cat = support.len();
    if n_cat < 2 {
        return Err(Error::Degenerate("outcome takes a single value".into()));
    }

    let mut cluster_sizes = vec![0usize; n];
    for &c in obs_cluster {
        if c >= n {
            return Err(Error::InvalidArgument(format!("cluster index {c} out of range")));
        }
        cluster_sizes[c] += 1;
    }
    if let Some(empty) = cluster_sizes.iter().position(|&s| s == 0) {
        return Err(Error::InvalidDataset(format!("cluster `{}` has no observations", cluster_ids[empty])));
    }

    let (cells, cell_offsets) = build_cells(&obs_category, obs_cluster, n);
    let design = Design {
        n_clusters: n,
        n_categories: n_cat,
        cells,
        cell_offsets,
    };
    check_separation(&design, &cluster_ids)?;

    let (mut alpha, mut beta) = initial_values::<T>(&design, link, &obs_category, obs_cluster, keys.len());
    let (mut ll, mut grad, mut info) = derivatives(&design, link, &alpha, &beta, true);
    if !ll.is_finite() {
        return Err(Error::Unstable("log-likelihood not finite at starting values".into()));
    }

    let roundoff = T::epsilon() * lit(64.0);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut gnorm = max_abs(&grad);
    let record = |it: usize, ll: T, g: T, s: f64, trace: &mut Vec<IterationRecord>| {
        if options.keep_trace {
            trace.push(IterationRecord {
                iteration: it,
                loglik: to_f64(ll),
                gradient_norm: to_f64(g),
                step_scale: s,
            });
        }
    };
    record(0, ll, gnorm, 0.0, &mut trace);

    while iterations < options.max_iterations {
        if gnorm <= options.gradient_tolerance {
            converged = true;
            break;
        }
        let factor = info.as_ref().expect("information computed").factor_regularized()?;
        let step = factor.solve(&grad);
        let m = design.n_alpha();

        let mut scale = T::one();
        let mut accepted = None;
        for halving in 0..=options.max_halvings {
            let cand_alpha: Vec<T> = alpha.iter().zip(&step[..m]).map(|(&a, &s)| a + scale * s).collect();
            let mut cand_beta = beta.clone();
            for (b, &s) in cand_beta[1..].iter_mut().zip(&step[m..]) {
                *b = *b + scale * s;
            }
            if feasible(&cand_alpha, &cand_beta) {
                let cand_ll = loglik(&design, link, &cand_alpha, &cand_beta);
                if cand_ll.is_finite() && cand_ll > ll {
                    accepted = Some((cand_alpha, cand_beta, cand_ll, halving, None));
                    break;
                }
                // Within rounding of the current value the likelihood cannot
                // rank the candidates; fall back to the gradient norm.
                if cand_ll.is_finite() && cand_ll >= ll - roundoff * (ll.abs() + T::one()) {
                    let d = derivatives(&design, link, &cand_alpha, &cand_beta, true);
                    if max_abs(&d.1) < gnorm {
                        accepted = Some((cand_alpha, cand_beta, cand_ll, halving, Some(d)));
                        break;
                    }
                }
            }
            scale = scale * lit(0.5);
        }
        let Some((a, b, new_ll, halvings, evaluated)) = accepted else {
            // No ascent direction left at working precision.
            converged = gnorm <= options.gradient_tolerance.sqrt();
            break;
        };
        iterations += 1;
        let change = (new_ll - ll).abs() / (ll.abs() + T::one());
        alpha = a;
        beta = b;
        let by_ascent = evaluated.is_none();
        let (l2, g2, i2) = evaluated.unwrap_or_else(|| derivatives(&design, link, &alpha, &beta, true));
        ll = l2;
        grad = g2;
        info = i2;
        gnorm = max_abs(&grad);
        record(iterations, ll, gnorm, to_f64(scale), &mut trace);
        if gnorm <= options.gradient_tolerance || (by_ascent && halvings == 0 && change <= options.loglik_tolerance) {
            converged = true;
            break;
        }
    }

    if let Some((i, b)) = beta
        .iter()
        .enumerate()
        .filter(|(_, b)| b.abs() > options.separation_bound)
        .max_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).unwrap_or(std::cmp::Ordering::Equal))
    {
        return Err(Error::Separation {
            cluster: cluster_ids[i].clone(),
            beta: to_f64(*b),
        });
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            gradient_norm: to_f64(gnorm),
        });
    }

    Ok(CpmFit {
        link,
        support,
        alpha,
        beta,
        cluster_ids,
        cluster_sizes,
        loglik: ll,
        converged,
        iterations,
        gradient_norm: gnorm,
        trace,
        obs_category,
        obs_cluster: obs_cluster.iter().map(|&c| c as u32).collect(),
        cells: design.cells,
        cell_offsets: design.cell_offsets,
    })
}

fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

fn build_cells(obs_category: &[u32], obs_cluster: &[usize], n: usize) -> (Vec<Cell>, Vec<usize>) {
    let mut keyed: Vec<(u32, u32)> = obs_cluster.iter().zip(obs_category).map(|(&i, &c)| (i as u32, c)).collect();
    keyed.sort_unstable();
    let mut cells: Vec<Cell> = Vec::new();
    for (cluster, category) in keyed {
        match cells.last_mut() {
            Some(cell) if cell.cluster == cluster && cell.category == category => cell.count += 1,
            _ => cells.push(Cell {
                cluster,
                category,
                count: 1,
            }),
        }
    }
    let mut offsets = vec![0usize; n + 1];
    for cell in &cells {
        offsets[cell.cluster as usize + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    (cells, offsets)
}

/// A cluster whose values all lie strictly below (or above) every value of
/// every other cluster has no finite maximum likelihood estimate.
fn check_separation(design: &Design, ids: &[String]) -> Result<()> {
    let n = design.n_clusters;
    if n < 2 {
        return Ok(());
    }
    let range = |i: usize| {
        let cells = &design.cells[design.cell_offsets[i]..design.cell_offsets[i + 1]];
        (cells[0].category, cells[cells.len() - 1].category)
    };
    let ranges: Vec<(u32, u32)> = (0..n).map(range).collect();
    // Two smallest minima and two largest maxima give "all others" in O(n).
    let mut mins = [(u32::MAX, usize::MAX); 2];
    let mut maxs = [(0u32, usize::MAX); 2];
    for (i, &(lo, hi)) in ranges.iter().enumerate() {
        if lo < mins[0].0 {
            mins[1] = mins[0];
            mins[0] = (lo, i);
        } else if lo < mins[1].0 {
            mins[1] = (lo, i);
        }
        if maxs[0].1 == usize::MAX || hi > maxs[0].0 {
            maxs[1] = maxs[0];
            maxs[0] = (hi, i);
        } else if maxs[1].1 == usize::MAX || hi > maxs[1].0 {
            maxs[1] = (hi, i);
        }
    }
    for (i, &(lo, hi)) in ranges.iter().enumerate() {
        let others_min = if mins[0].1 == i { mins[1].0 } else { mins[0].0 };
        let others_max = if maxs[0].1 == i { maxs[1].0 } else { maxs[0].0 };
        if hi < others_min || lo > others_max {
            return Err(Error::Separation {
                cluster: ids[i].clone(),
                beta: f64::INFINITY,
            });
        }
    }
    Ok(())
}

fn initial_values<T: Scalar>(
    design: &Design,
    link: LinkFunction,
    obs_category: &[u32],
    obs_cluster: &[usize],
    total: usize,
) -> (Vec<T>, Vec<T>) {
    let c = design.n_categories;
    let mut freq = vec![0usize; c];
    for &k in obs_category {
        freq[k as usize] += 1;
    }
    let mut cum = vec![0usize; c + 1];
    for k in 0..c {
        cum[k + 1] = cum[k] + freq[k];
    }
    let nt: T = count(total);
    let g = |below: usize| -> T {
        let p = count::<T>(below) / nt;
        if p <= lit(0.5) {
            link.quantile(p)
        } else {
            link.quantile_upper(count::<T>(total - below) / nt)
        }
    };
    // g at the pooled mid-CDF of each category, averaged per cluster.
    let z: Vec<T> = (0..c)
        .map(|k| {
            let mid = (count::<T>(cum[k]) + count::<T>(cum[k + 1])) / (lit::<T>(2.0) * nt);
            if mid <= lit(0.5) {
                link.quantile(mid)
            } else {
                link.quantile_upper(T::one() - mid)
            }
        })
        .collect();
    let n = design.n_clusters;
    let mut zsum = vec![T::zero(); n];
    let mut sizes = vec![0usize; n];
    for (&k, &i) in obs_category.iter().zip(obs_cluster) {
        zsum[i] = zsum[i] + z[k as usize];
        sizes[i] += 1;
    }
    let zbar: Vec<T> = zsum.iter().zip(&sizes).map(|(&s, &k)| s / count::<T>(k)).collect();
    let bound = lit::<T>(10.0);
    let beta: Vec<T> = zbar.iter().map(|&zb| (zb - zbar[0]).max(-bound).min(bound)).collect();
    let shift = beta.iter().copied().sum::<T>() / count::<T>(n);
    let alpha = (1..c).map(|k| g(cum[k]) + shift).collect();
    (alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(groups: Vec<Vec<f64>>, link: LinkFunction) -> Result<CpmFit<f64>> {
        let mut keys = Vec::new();
        let mut cl = Vec::new();
        for (i, g) in groups.iter().enumerate() {
            keys.extend_from_slice(g);
            cl.extend(std::iter::repeat_n(i, g.len()));
        }
        let ids = (0..groups.len()).map(|i| format!("c{i}")).collect();
        fit_cpm_keys(&keys, &cl, ids, link, &CpmOptions::default())
    }

    #[test]
    fn saturated_single_cluster() {
        let f = fit(vec![vec![1.0, 1.0, 2.0, 3.0]], LinkFunction::Logit).unwrap();
        assert!((f.alpha[0] - 0.0).abs() < 1e-8);
        assert!((f.alpha[1] - 3.0_f64.ln()).abs() < 1e-8);
        assert!(f.converged);
    }

    #[test]
    fn identical_clusters_have_zero_shift() {
        let g = vec![1.0, 2.0, 2.0, 5.0, 7.0];
        for link in LinkFunction::ALL {
            let f = fit(vec![g.clone(), g.clone()], link).unwrap();
            assert!(f.beta[1].abs() < 1e-6, "{link}");
        }
    }

    #[test]
    fn probabilities_are_coherent() {
        let f = fit(
            vec![vec![1.0, 4.0, 2.0, 9.0], vec![3.0, 3.0, 8.0], vec![5.0, 6.0, 1.0, 7.0]],
            LinkFunction::Probit,
        )
        .unwrap();
        for i in 0..3 {
            let p = f.cell_probabilities(i);
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        assert!(f.gradient_norm <= 1e-8);
    }

    #[test]
    fn separated_cluster_is_reported() {
        match fit(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0]], LinkFunction::Probit) {
            Err(Error::Separation { cluster, .. }) => assert_eq!(cluster, "c0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_outcome_is_degenerate() {
        assert!(matches!(fit(vec![vec![1.0, 1.0], vec![1.0]], LinkFunction::Probit), Err(Error::Degenerate(_))));
    }
}
