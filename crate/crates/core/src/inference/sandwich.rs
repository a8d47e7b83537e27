//! Stacked estimating equations `(U_X, U_Y, m)`: the two CPM scores plus a
//! small block of moment conditions whose solution feeds a correlation.
//!
//! With `A` the averaged negative Jacobian and `B` the averaged outer product
//! of the stacked functions, the moment block of `A⁻¹ B A⁻ᵀ / n` reduces to
//! `n⁻² Σ φ_i φ_iᵀ` with per-cluster influence
//!
//! ```text
//! φ_i = S⁻¹ (m_i + Q_X J_X⁻¹ U_Xi + Q_Y J_Y⁻¹ U_Yi)
//! ```
//!
//! where `J` is the observed CPM information, `Q = Σ_i ∂m_i/∂θ` and
//! `S = −n⁻¹ Σ_i ∂m_i/∂η`. The CPM blocks are analytic; `∂m/∂(summaries)`
//! and `∂m/∂η` are central differences of the (cheap) moment functions,
//! chained with analytic derivatives of the residuals and coefficients.

use super::score::cpm_score;
use super::{make_inference, CiOptions, Inference};
use crate::cpm::structured::ArrowFactor;
use crate::cpm::{bounds, CpmFit};
use crate::dataset::{ClusteredDataset, WeightVector};
use crate::error::{Error, Result};
use crate::estimators::InferenceMethod;
use crate::linalg::{DenseMatrix, Lu};
use crate::scalar::{count, lit, norm_cdf, Scalar};

/// `(θ3 − θ1θ2) / √((θ4 − θ1²)(θ5 − θ2²))`.
pub fn correlation_from_moments<T: Scalar>(t: &[T]) -> T {
    (t[2] - t[0] * t[1]) / ((t[3] - t[0] * t[0]) * (t[4] - t[1] * t[1])).sqrt()
}

/// Gradient of [`correlation_from_moments`].
pub fn correlation_gradient<T: Scalar>(t: &[T]) -> [T; 5] {
    let a = t[3] - t[0] * t[0];
    let b = t[4] - t[1] * t[1];
    let d = (a * b).sqrt();
    let g = (t[2] - t[0] * t[1]) / d;
    let half = lit::<T>(0.5);
    [
        -t[1] / d + g * t[0] / a,
        -t[0] / d + g * t[1] / b,
        T::one() / d,
        -half * g / a,
        -half * g / b,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Moments {
    /// Cluster means of `r_x, r_y, r_x r_y, r_x², r_y²`.
    Within,
    /// Normal-law moments of the cluster coefficients:
    /// `μ_X, μ_Y, M_X, M_Y` then the five `F_β` moments.
    Between,
}

impl Moments {
    fn dim(self) -> usize {
        match self {
            Moments::Within => 5,
            Moments::Between => 9,
        }
    }

    fn eval<T: Scalar>(self, sx: &[T], sy: &[T], eta: &[T], out: &mut [T]) {
        match self {
            Moments::Within => {
                let k = count::<T>(sx.len());
                let mut acc = [T::zero(); 5];
                for (&x, &y) in sx.iter().zip(sy) {
                    acc[0] = acc[0] + x;
                    acc[1] = acc[1] + y;
                    acc[2] = acc[2] + x * y;
                    acc[3] = acc[3] + x * x;
                    acc[4] = acc[4] + y * y;
                }
                for r in 0..5 {
                    out[r] = acc[r] / k - eta[r];
                }
            }
            Moments::Between => {
                let (bx, by) = (sx[0], sy[0]);
                let fx = norm_cdf((bx - eta[0]) / (eta[2] - eta[0] * eta[0]).sqrt());
                let fy = norm_cdf((by - eta[1]) / (eta[3] - eta[1] * eta[1]).sqrt());
                out[0] = bx - eta[0];
                out[1] = by - eta[1];
                out[2] = bx * bx - eta[2];
                out[3] = by * by - eta[3];
                out[4] = fx - eta[4];
                out[5] = fy - eta[5];
                out[6] = fx * fy - eta[6];
                out[7] = fx * fx - eta[7];
                out[8] = fy * fy - eta[8];
            }
        }
    }

    /// Index of the five correlation moments inside `η`.
    fn correlation_offset(self) -> usize {
        match self {
            Moments::Within => 0,
            Moments::Between => 4,
        }
    }
}

/// Result of one stacked system.
#[derive(Debug, Clone)]
pub struct StackedEstimate<T> {
    /// Solution of the moment equations.
    pub eta: Vec<T>,
    /// Sandwich covariance of `η̂`.
    pub covariance: DenseMatrix<T>,
    /// Correlation implied by `η̂`.
    pub value: T,
    pub se: T,
    /// Max-norm of `Σ_i m_i(η̂)`.
    pub moment_residual: T,
}

/// Factorized CPM information and scores for a pair of fits, reusable across
/// both stacked systems.
pub struct StackedContext<'a, T> {
    fit_x: &'a CpmFit<T>,
    fit_y: &'a CpmFit<T>,
    factor_x: ArrowFactor<T>,
    factor_y: ArrowFactor<T>,
    score_x: Vec<Vec<(usize, T)>>,
    score_y: Vec<Vec<(usize, T)>>,
}

impl<'a, T: Scalar> StackedContext<'a, T> {
    pub fn new(fit_x: &'a CpmFit<T>, fit_y: &'a CpmFit<T>) -> Result<Self> {
        if fit_x.obs_cluster != fit_y.obs_cluster {
            return Err(Error::InvalidArgument("fits are not on the same observations".into()));
        }
        Ok(Self {
            fit_x,
            fit_y,
            factor_x: fit_x.information().factor_regularized()?,
            factor_y: fit_y.information().factor_regularized()?,
            score_x: cpm_score(fit_x),
            score_y: cpm_score(fit_y),
        })
    }

    /// Max-norm of the summed CPM scores of both fits.
    pub fn score_residual(&self) -> T {
        let mut worst = T::zero();
        for (scores, p) in [(&self.score_x, self.fit_x.theta().len()), (&self.score_y, self.fit_y.theta().len())] {
            let mut total = vec![T::zero(); p];
            for s in scores {
                for &(k, v) in s {
                    total[k] = total[k] + v;
                }
            }
            worst = total.iter().fold(worst, |a, v| a.max(v.abs()));
        }
        worst
    }

    pub fn gamma_w(&self) -> Result<StackedEstimate<T>> {
        let (sx, gx) = residual_summaries(self.fit_x);
        let (sy, gy) = residual_summaries(self.fit_y);
        let n = count::<T>(sx.len());
        let mut eta = vec![T::zero(); 5];
        let mut tmp = [T::zero(); 5];
        let zero = [T::zero(); 5];
        for (x, y) in sx.iter().zip(&sy) {
            Moments::Within.eval(x, y, &zero, &mut tmp);
            for r in 0..5 {
                eta[r] = eta[r] + tmp[r] / n;
            }
        }
        self.solve(Moments::Within, eta, &sx, &gx, &sy, &gy)
    }

    pub fn gamma_b(&self) -> Result<StackedEstimate<T>> {
        let (sx, gx) = coefficient_summaries(self.fit_x);
        let (sy, gy) = coefficient_summaries(self.fit_y);
        let n = count::<T>(sx.len());
        let mean = |s: &[Vec<T>], f: &dyn Fn(T) -> T| s.iter().map(|v| f(v[0])).sum::<T>() / n;
        let (mx, my) = (mean(&sx, &|b| b), mean(&sy, &|b| b));
        let (qx, qy) = (mean(&sx, &|b| b * b), mean(&sy, &|b| b * b));
        let (vx, vy) = (qx - mx * mx, qy - my * my);
        if !(vx > T::zero()) || !(vy > T::zero()) {
            return Err(Error::Unstable("cluster coefficients have no spread".into()));
        }
        let fx: Vec<T> = sx.iter().map(|v| norm_cdf((v[0] - mx) / vx.sqrt())).collect();
        let fy: Vec<T> = sy.iter().map(|v| norm_cdf((v[0] - my) / vy.sqrt())).collect();
        let avg = |f: &dyn Fn(usize) -> T| (0..sx.len()).map(f).sum::<T>() / n;
        let eta = vec![
            mx,
            my,
            qx,
            qy,
            avg(&|i| fx[i]),
            avg(&|i| fy[i]),
            avg(&|i| fx[i] * fy[i]),
            avg(&|i| fx[i] * fx[i]),
            avg(&|i| fy[i] * fy[i]),
        ];
        self.solve(Moments::Between, eta, &sx, &gx, &sy, &gy)
    }

    fn solve(
        &self,
        kind: Moments,
        eta: Vec<T>,
        sx: &[Vec<T>],
        gx: &[Vec<Vec<(usize, T)>>],
        sy: &[Vec<T>],
        gy: &[Vec<Vec<(usize, T)>>],
    ) -> Result<StackedEstimate<T>> {
        let q = kind.dim();
        let n = sx.len();
        let nt = count::<T>(n);
        let px = self.fit_x.theta().len();
        let py = self.fit_y.theta().len();

        let mut moments = vec![vec![T::zero(); q]; n];
        for i in 0..n {
            kind.eval(&sx[i], &sy[i], &eta, &mut moments[i]);
        }
        let mut residual = vec![T::zero(); q];
        for m in &moments {
            for r in 0..q {
                residual[r] = residual[r] + m[r];
            }
        }
        let moment_residual = residual.iter().fold(T::zero(), |a, v| a.max(v.abs()));

        // Q = Σ_i ∂m_i/∂s · ∂s/∂θ, with ∂m/∂s by central differences.
        let mut qx = vec![vec![T::zero(); px]; q];
        let mut qy = vec![vec![T::zero(); py]; q];
        let mut plus = vec![T::zero(); q];
        let mut minus = vec![T::zero(); q];
        let step = lit::<T>(1e-5);
        for i in 0..n {
            for (axis, (s_own, grads, qmat)) in [(&sx[i], &gx[i], &mut qx), (&sy[i], &gy[i], &mut qy)].into_iter().enumerate() {
                let mut work = s_own.clone();
                for (j, grad) in grads.iter().enumerate() {
                    if grad.is_empty() {
                        continue;
                    }
                    let h = step * work[j].abs().max(T::one());
                    let orig = work[j];
                    work[j] = orig + h;
                    let (ax, ay) = if axis == 0 { (&work, &sy[i]) } else { (&sx[i], &work) };
                    kind.eval(ax, ay, &eta, &mut plus);
                    work[j] = orig - h;
                    let (ax, ay) = if axis == 0 { (&work, &sy[i]) } else { (&sx[i], &work) };
                    kind.eval(ax, ay, &eta, &mut minus);
                    work[j] = orig;
                    for r in 0..q {
                        let d = (plus[r] - minus[r]) / (h + h);
                        if d != T::zero() {
                            for &(k, v) in grad {
                                qmat[r][k] = qmat[r][k] + d * v;
                            }
                        }
                    }
                }
            }
        }

        // S = −n⁻¹ Σ_i ∂m_i/∂η.
        let mut s = DenseMatrix::<T>::zeros(q);
        let mut e = eta.clone();
        for c in 0..q {
            let h = step * eta[c].abs().max(T::one());
            for i in 0..n {
                e[c] = eta[c] + h;
                kind.eval(&sx[i], &sy[i], &e, &mut plus);
                e[c] = eta[c] - h;
                kind.eval(&sx[i], &sy[i], &e, &mut minus);
                for r in 0..q {
                    s[(r, c)] = s[(r, c)] - (plus[r] - minus[r]) / ((h + h) * nt);
                }
            }
            e[c] = eta[c];
        }
        if !(0..q).all(|r| (0..q).all(|c| s[(r, c)].is_finite())) {
            return Err(Error::Unstable("moment Jacobian is not finite".into()));
        }
        let s_lu = Lu::new(&s)?;

        // Rows of Q J⁻¹ (J is symmetric).
        let zx: Vec<Vec<T>> = qx.iter().map(|row| self.factor_x.solve(row)).collect();
        let zy: Vec<Vec<T>> = qy.iter().map(|row| self.factor_y.solve(row)).collect();

        let mut cov = DenseMatrix::zeros(q);
        let mut t = vec![T::zero(); q];
        for i in 0..n {
            for r in 0..q {
                let ux: T = self.score_x[i].iter().map(|&(k, v)| zx[r][k] * v).sum();
                let uy: T = self.score_y[i].iter().map(|&(k, v)| zy[r][k] * v).sum();
                t[r] = moments[i][r] + ux + uy;
            }
            let phi = s_lu.solve(&t);
            for r in 0..q {
                for c in 0..q {
                    cov[(r, c)] = cov[(r, c)] + phi[r] * phi[c] / (nt * nt);
                }
            }
        }

        let off = kind.correlation_offset();
        let theta = &eta[off..off + 5];
        let value = correlation_from_moments(theta);
        if !value.is_finite() {
            return Err(Error::Unstable("moment-based correlation is not finite".into()));
        }
        let grad = correlation_gradient(theta);
        let mut var = T::zero();
        for r in 0..5 {
            for c in 0..5 {
                var = var + grad[r] * cov[(off + r, off + c)] * grad[c];
            }
        }
        Ok(StackedEstimate {
            eta,
            covariance: cov,
            value,
            se: var.max(T::zero()).sqrt(),
            moment_residual,
        })
    }
}

type Summaries<T> = (Vec<Vec<T>>, Vec<Vec<Vec<(usize, T)>>>);

/// Model residuals per cluster with their sparse gradients in `θ`.
fn residual_summaries<T: Scalar>(fit: &CpmFit<T>) -> Summaries<T> {
    let n = fit.n_clusters();
    let m = fit.alpha.len();
    let mut vals = vec![Vec::new(); n];
    let mut grads = vec![Vec::new(); n];
    for (&i, &c) in fit.obs_cluster.iter().zip(&fit.obs_category) {
        let (i, c) = (i as usize, c as usize);
        if fit.cluster_sizes[i] == 1 {
            vals[i].push(T::zero());
            grads[i].push(Vec::new());
            continue;
        }
        let (l, u) = bounds(&fit.alpha, fit.beta[i], c);
        vals[i].push(fit.link.cdf(u) - fit.link.sf(l));
        let (fu, fl) = (fit.link.pdf(u), fit.link.pdf(l));
        let mut g = Vec::with_capacity(3);
        if c > 0 {
            g.push((c - 1, fl));
        }
        if c < m {
            g.push((c, fu));
        }
        if i > 0 {
            g.push((m + i - 1, -(fu + fl)));
        }
        grads[i].push(g);
    }
    (vals, grads)
}

fn coefficient_summaries<T: Scalar>(fit: &CpmFit<T>) -> Summaries<T> {
    let m = fit.alpha.len();
    let vals = fit.beta.iter().map(|&b| vec![b]).collect();
    let grads = (0..fit.n_clusters())
        .map(|i| vec![if i > 0 { vec![(m + i - 1, T::one())] } else { Vec::new() }])
        .collect();
    (vals, grads)
}

fn require_equal_cluster<T: Scalar>(ds: &ClusteredDataset<T>, w: &WeightVector<T>) -> Result<()> {
    if w.is_equal_cluster(ds) {
        Ok(())
    } else {
        Err(Error::Unsupported(
            "analytic inference requires equal-cluster weights; use the cluster bootstrap instead".into(),
        ))
    }
}

/// Sandwich standard error and Wald interval for the within-cluster
/// correlation.
pub fn sandwich_gamma_w<T: Scalar>(
    ds: &ClusteredDataset<T>,
    fit_x: &CpmFit<T>,
    fit_y: &CpmFit<T>,
    w: &WeightVector<T>,
    opts: &CiOptions,
) -> Result<Inference<T>> {
    require_equal_cluster(ds, w)?;
    let est = StackedContext::new(fit_x, fit_y)?.gamma_w()?;
    Ok(make_inference(est.value, est.se, opts, InferenceMethod::Sandwich))
}

/// Sandwich standard error for the between-cluster correlation, with the
/// interval centred at `center` (the median-based or approximation-based
/// point estimate).
pub fn sandwich_gamma_b<T: Scalar>(
    ds: &ClusteredDataset<T>,
    fit_x: &CpmFit<T>,
    fit_y: &CpmFit<T>,
    w: &WeightVector<T>,
    center: T,
    opts: &CiOptions,
) -> Result<Inference<T>> {
    require_equal_cluster(ds, w)?;
    let est = StackedContext::new(fit_x, fit_y)?.gamma_b()?;
    Ok(make_inference(center, est.se, opts, InferenceMethod::Sandwich))
}
