use thiserror::Error;

/// Errors raised by grid construction, geometry, solvers and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid cutoff: {0}")]
    InvalidCutoff(String),
    #[error("surface amplitude {amplitude:.6e} violates |psi| < {limit:.6e}")]
    AmplitudeTooLarge { amplitude: f64, limit: f64 },
    #[error("diffeomorphism breakdown: min d3phi = {min_d3phi:.6e} <= floor {floor:.3e}")]
    DiffeomorphismBreakdown { min_d3phi: f64, floor: f64 },
    #[error("constraint residual too large: {name} = {value:.3e} > {tol:.1e}")]
    ConstraintResidualTooLarge { name: &'static str, value: f64, tol: f64 },
    #[error("pressure solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("invalid time step: {0}")]
    InvalidTimeStep(String),
    #[error("insufficient history: need {needed} snapshots, have {have}")]
    InsufficientHistory { needed: usize, have: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    /// True for failures that mean the simulated solution left the valid regime.
    pub fn is_breakdown(&self) -> bool {
        matches!(
            self,
            Error::DiffeomorphismBreakdown { .. }
                | Error::AmplitudeTooLarge { .. }
                | Error::NonConvergence { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
