use thiserror::Error;

/// Errors raised by data ingestion, estimation and inference.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("length mismatch for {what}: {left} vs {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("model fit did not converge after {iterations} iterations (max |gradient| = {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("complete separation: coefficient of cluster `{cluster}` diverged (|beta| = {beta:.3})")]
    Separation { cluster: String, beta: f64 },

    #[error("unstable estimate: {0}")]
    Unstable(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("weight scheme mismatch: {0}")]
    SchemeMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{failed} of {total} resamples failed ({census})")]
    ResampleFailures {
        failed: usize,
        total: usize,
        census: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input
    /// data or the caller's request.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Separation { .. }
                | Error::Unstable(_)
                | Error::Singular(_)
                | Error::ResampleFailures { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
