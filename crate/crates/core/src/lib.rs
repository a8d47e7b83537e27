//! Total, between-cluster and within-cluster Spearman rank correlations for
//! two-level clustered data.
//!
//! The numerical core is generic over [`Scalar`] (`f64` and `f32`); the
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! estimators are tuned for.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cpm;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod linalg;
pub mod rankcore;
pub mod scalar;

pub use analysis::{analyze, analyze_weighted, Analysis, AnalysisOptions, CiMethod, PsrMode, TotalVariance};
pub use cpm::{fit_cpm, CpmFit, CpmOptions, LinkFunction};
pub use dataset::{
    compute_weights, load_csv, parse_levels, write_csv, Axis, Cluster, ClusteredDataset, CsvSchema, ObservedValue,
    VariableKind, WeightScheme, WeightVector,
};
pub use error::{Error, Result};
pub use estimators::{ConfidenceInterval, CorrelationEstimate, EstimatorKind, InferenceMethod};
pub use inference::{cluster_bootstrap, BootstrapOptions, CiOptions, GammaTVarianceMethod, Inference};
pub use rankcore::{d_correction, rank_icc, spearman, total_spearman, weighted_mid_cdf, MidCdf, RankIccEstimate};
pub use scalar::Scalar;

pub type Dataset = ClusteredDataset<f64>;
pub type Weights = WeightVector<f64>;
pub type Fit = CpmFit<f64>;
pub type Estimate = CorrelationEstimate<f64>;
