use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("evaluation point {at} lies outside the support [{lo}, {hi}]")]
    Extrapolation { at: f64, lo: f64, hi: f64 },

    #[error("Radau node search did not converge for n = {n}")]
    RootFinding { n: usize },

    #[error(
        "jacobian validation failed: {which}[{row},{col}] analytic {analytic:e} vs finite difference {numeric:e} (relative error {rel_error:e})"
    )]
    JacobianMismatch {
        which: &'static str,
        row: usize,
        col: usize,
        analytic: f64,
        numeric: f64,
        rel_error: f64,
    },

    #[error("solver did not converge ({status}) after {iterations} iterations, kkt residual {kkt_residual:e}")]
    SolverFailure {
        status: String,
        iterations: usize,
        kkt_residual: f64,
    },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("guidance cycle {cycle} failed: {source}")]
    Cycle {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::RootFinding { .. } | Error::SolverFailure { .. } | Error::Integration { .. } => {
                true
            }
            Error::Cycle { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
