use thiserror::Error;

/// Failure modes shared by every module in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("iteration did not converge after {iters} steps (residual {residual:e})")]
    NonConvergent { iters: usize, residual: f64 },
    #[error("matrix is not Schur stable (spectral radius {0})")]
    Unstable(f64),
    #[error("regressor Gram matrix is degenerate (condition number {0:e})")]
    Degenerate(f64),
    #[error("error policy needs the true system")]
    MissingTruth,
    #[error("synthesis problem is infeasible")]
    Infeasible,
    #[error("system is not stabilizable")]
    Unstabilizable,
    #[error("no stabilizable point found in the confidence set")]
    NoStabilizablePoint,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
