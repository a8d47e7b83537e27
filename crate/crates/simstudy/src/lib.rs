//! Simulation scenarios, population truths and a Monte Carlo study runner
//! for the clustered rank correlations in `rankcorr`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod scenario;
pub mod study;
pub mod truth;

pub use scenario::{
    categorize, generate, generate_latent, observe, ordinal_cutoffs, ClusterSize, LatentCluster, Scenario,
    ScenarioConfig,
};
pub use study::{applicable_estimators, replicate_rng, run_study, ReportRow, SimulationReport, StudyConfig, MAX_FAILURE_RATE};
pub use truth::{arcsin_rank, true_values, TrueValues, Truth, DEFAULT_MC_SIZE, MIN_MC_SIZE};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{estimator}: {failed} of {reps} replicates failed ({census})")]
    TooManyFailures {
        estimator: String,
        failed: usize,
        reps: usize,
        census: String,
    },

    #[error(transparent)]
    Core(#[from] rankcorr::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
