//! Cumulative probability models of one outcome on cluster indicators.

mod fit;
mod link;
mod psr;
pub mod structured;

pub(crate) use fit::bounds;
pub use fit::{fit_cpm, fit_cpm_keys, Cell, CpmFit, CpmOptions, IterationRecord};
pub use link::LinkFunction;
pub use psr::{cluster_median_coeffs, psr_all, psr_from_cpm, psr_nonparametric, MedianCoefficients};
