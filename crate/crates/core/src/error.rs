use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("t = {t} lies outside the spline domain [{start}, {end}]")]
    Domain { t: f64, start: f64, end: f64 },

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("least-squares system is rank deficient (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("underdetermined least squares: {samples} samples for {unknowns} unknowns")]
    Underdetermined { samples: usize, unknowns: usize },

    #[error("simulation fault at step {step}: {reason}")]
    SimulationFault { step: usize, reason: String },

    #[error("state leaves the Euler-angle chart (roll {roll:.4}, pitch {pitch:.4})")]
    EulerChart { roll: f64, pitch: f64 },

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("{what} did not converge after {iterations} iterations (residual history {history:?})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported schema: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the `splineop` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schema(_) | Error::Parameter(_) => 2,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
