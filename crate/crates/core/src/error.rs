use thiserror::Error;

/// Errors produced anywhere in the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("symmetric eigensolver did not converge for a {dim}x{dim} matrix within {max_iter} sweeps (off-diagonal residual {residual:e})")]
    EigenNotConverged {
        dim: usize,
        max_iter: usize,
        residual: f64,
    },

    #[error("matrix is not positive semidefinite: eigenvalue {min_eigenvalue:e} is below the tolerance -{tolerance:e}")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },

    #[error("matrix is not positive definite: minimum eigenvalue {min_eigenvalue:e}")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("linear system is too ill-conditioned (condition estimate {condition_estimate:e}, relative residual {residual:e})")]
    IllConditioned {
        condition_estimate: f64,
        residual: f64,
    },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel {0} has no exact finite-dimensional feature map")]
    UnsupportedKernel(&'static str),

    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("signals are sampled on different time grids")]
    GridMismatch,

    #[error("sampled signal covers [{start}, {end}] but [0, {horizon}] is required")]
    InsufficientCoverage { start: f64, end: f64, horizon: f64 },

    #[error("relative error is undefined for a zero reference signal")]
    ZeroNorm,

    #[error("simulation produced a non-finite state at t = {time}")]
    SimulationBlowUp { time: f64 },

    #[error("solver numerical breakdown: {0}")]
    SolverBreakdown(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
