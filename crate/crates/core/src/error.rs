use thiserror::Error;

/// Errors raised across the control pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("Riccati iteration did not converge after {iterations} steps (non-stabilizable or ill-conditioned pair)")]
    RiccatiNonConvergence { iterations: usize },

    #[error("invariant-set iteration did not converge after {sweeps} sweeps (closed loop spectral radius near one?)")]
    InvariantSetNonConvergence { sweeps: usize },

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("problem is infeasible for this parameter")]
    Infeasible,

    #[error("iteration limit reached ({phase}: {iterations} iterations)")]
    IterLimit { phase: &'static str, iterations: usize },

    #[error("working set lost rank while adding constraint {row}")]
    RankLoss { row: usize },

    #[error("duality certificate precondition violated: {0}")]
    CertificatePrecondition(String),

    #[error("recursive feasibility violated at step {step}")]
    RecursiveFeasibility { step: usize },

    #[error("training diverged at epoch {epoch} (non-finite loss); try a lower learning rate")]
    TrainingDiverged { epoch: usize },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("sobol generator supports at most {max} dimensions, requested {requested}")]
    UnsupportedDimension { requested: usize, max: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
