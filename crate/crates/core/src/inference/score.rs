use crate::cpm::{bounds, CpmFit};
use crate::linalg::DenseMatrix;
use crate::scalar::{count, lit, Scalar};

/// Per-cluster contributions to the log-likelihood gradient, as sparse
/// `(parameter index, value)` lists in the layout of [`CpmFit::theta`].
pub fn cpm_score<T: Scalar>(fit: &CpmFit<T>) -> Vec<Vec<(usize, T)>> {
    let m = fit.alpha.len();
    (0..fit.n_clusters())
        .map(|i| {
            let mut out: Vec<(usize, T)> = Vec::new();
            let mut gb = T::zero();
            for cell in &fit.cells[fit.cell_offsets[i]..fit.cell_offsets[i + 1]] {
                let c = cell.category as usize;
                let w = count::<T>(cell.count as usize);
                let (l, u) = bounds(&fit.alpha, fit.beta[i], c);
                let p = fit.link.interval(l, u);
                let (gu, gl) = (fit.link.pdf(u) / p, fit.link.pdf(l) / p);
                if c > 0 {
                    add(&mut out, c - 1, -w * gl);
                }
                if c < m {
                    add(&mut out, c, w * gu);
                }
                gb = gb - w * (gu - gl);
            }
            if i > 0 {
                out.push((m + i - 1, gb));
            }
            out
        })
        .collect()
}

fn add<T: Scalar>(v: &mut Vec<(usize, T)>, idx: usize, val: T) {
    match v.last_mut() {
        Some((last, acc)) if *last == idx => *acc = *acc + val,
        _ => v.push((idx, val)),
    }
}

/// Score of one cluster in generalized-estimating-equation form.
#[derive(Debug, Clone, PartialEq)]
pub struct GeeScore<T> {
    /// Dense score over all free parameters.
    pub score: Vec<T>,
    /// Number of cumulative probabilities clamped away from 0 or 1.
    pub clamped: usize,
}

/// `U_i = Σ_j Dᵀ V⁻¹ (O − μ)` with cumulative indicators `O_c = 1{x ≤ x_(c)}`,
/// `μ_c = G(α_c − β_i)` and the multinomial covariance
/// `V_lk = μ_min(l,k) (1 − μ_max(l,k))`.
///
/// Dense in the number of categories; intended as an independent check of
/// [`cpm_score`] on small problems.
pub fn gee_score<T: Scalar>(fit: &CpmFit<T>, cluster: usize) -> GeeScore<T> {
    let m = fit.alpha.len();
    let p = m + fit.n_clusters() - 1;
    let lo = lit::<T>(1e-12);
    let hi = T::one() - lo;
    let mut clamped = 0;
    let mut mu = vec![T::zero(); m];
    let mut dens = vec![T::zero(); m];
    for c in 0..m {
        let eta = fit.alpha[c] - fit.beta[cluster];
        let v = fit.link.cdf(eta);
        if v < lo || v > hi {
            clamped += 1;
        }
        mu[c] = v.max(lo).min(hi);
        dens[c] = fit.link.pdf(eta);
    }
    let mut v = DenseMatrix::zeros(m);
    for l in 0..m {
        for k in 0..m {
            let (a, b) = if l <= k { (l, k) } else { (k, l) };
            v[(l, k)] = mu[a] * (T::one() - mu[b]);
        }
    }
    let factor = v.factor().expect("multinomial covariance is positive definite");

    let mut score = vec![T::zero(); p];
    let start = fit.obs_cluster.iter().position(|&c| c as usize == cluster).unwrap_or(0);
    for j in start..fit.obs_cluster.len() {
        if fit.obs_cluster[j] as usize != cluster {
            break;
        }
        let cat = fit.obs_category[j] as usize;
        let resid: Vec<T> = (0..m)
            .map(|c| if cat <= c { T::one() } else { T::zero() } - mu[c])
            .collect();
        let vr = factor.solve(&resid);
        // D has ∂μ_c/∂α_c = f_c and ∂μ_c/∂β_i = −f_c.
        for c in 0..m {
            score[c] = score[c] + dens[c] * vr[c];
            if cluster > 0 {
                score[m + cluster - 1] = score[m + cluster - 1] - dens[c] * vr[c];
            }
        }
    }
    GeeScore { score, clamped }
}
