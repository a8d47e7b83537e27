//! Standard errors and confidence intervals.
//!
//! Analytic routes: stacked estimating equations with a sandwich covariance
//! for the within- and between-cluster correlations, and an influence-function
//! variance for the total correlation. The cluster bootstrap covers every
//! estimator and is the fallback whenever the analytic assumptions fail.

mod bootstrap;
mod influence;
mod sandwich;
mod score;

pub use bootstrap::{cluster_bootstrap, BootstrapComponent, BootstrapOptions};
pub use influence::{gamma_t_influence, var_gamma_t, GammaTVarianceMethod};
pub use sandwich::{
    correlation_from_moments, correlation_gradient, sandwich_gamma_b, sandwich_gamma_w, StackedContext,
    StackedEstimate,
};
pub use score::{cpm_score, gee_score, GeeScore};

use serde::{Deserialize, Serialize};

use crate::estimators::{ConfidenceInterval, InferenceMethod};
use crate::scalar::{lit, norm_quantile_upper, to_f64, Scalar};

/// Interval construction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiOptions {
    pub level: f64,
    /// Build the interval on the Fisher-z scale and map it back.
    pub fisher_z: bool,
}

impl Default for CiOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            fisher_z: false,
        }
    }
}

impl CiOptions {
    /// Two-sided normal critical value, e.g. 1.959964 at 95%.
    pub fn z<T: Scalar>(&self) -> T {
        norm_quantile_upper(lit::<T>((1.0 - self.level) / 2.0))
    }
}

/// A standard error with its interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inference<T> {
    pub se: T,
    pub ci: ConfidenceInterval<T>,
    pub method: InferenceMethod,
    /// The standard error is numerically zero (e.g. a correlation pinned at
    /// ±1), so the interval carries no information.
    pub degenerate: bool,
}

/// Wald interval `value ± z·se`, truncated to `[-1, 1]`.
pub fn wald_ci<T: Scalar>(value: T, se: T, opts: &CiOptions) -> ConfidenceInterval<T> {
    let z: T = opts.z();
    let one = T::one();
    if opts.fisher_z && value.abs() < one {
        let center = value.atanh();
        let half = z * se / (one - value * value);
        return ConfidenceInterval {
            lo: (center - half).tanh(),
            hi: (center + half).tanh(),
            level: opts.level,
        };
    }
    ConfidenceInterval {
        lo: (value - z * se).max(-one),
        hi: (value + z * se).min(one),
        level: opts.level,
    }
}

pub(crate) fn make_inference<T: Scalar>(value: T, se: T, opts: &CiOptions, method: InferenceMethod) -> Inference<T> {
    Inference {
        se,
        ci: wald_ci(value, se, opts),
        method,
        degenerate: !(to_f64(se) > 1e-12),
    }
}
