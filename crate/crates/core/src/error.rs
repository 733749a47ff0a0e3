use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the arguments does not hold.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A file could not be parsed under its declared layout.
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A run configuration failed validation.
    #[error("config: {0}")]
    Config(String),

    /// The risk-neutral probability of a step falls outside (0, 1).
    #[error("arbitrage violation at step {step}: q = {q} is outside (0,1){}", feasible_hint(*.max_feasible_dt))]
    Arbitrage {
        step: usize,
        q: f64,
        /// Largest step size below which q is feasible for the same inputs, when one exists.
        max_feasible_dt: Option<f64>,
    },

    /// A computation produced a degenerate or non-finite quantity.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An optimizer exhausted its starts without meeting its tolerance.
    #[error("optimizer did not converge: {message} (best objective {best_value}, params {best_params:?})")]
    NotConverged { message: String, best_params: Vec<f64>, best_value: f64 },
}

fn feasible_hint(dt: Option<f64>) -> String {
    match dt {
        Some(dt) => format!("; feasible for step sizes below {dt:.6e}"),
        None => "; no feasible step size found".to_string(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), message: message.into() }
    }

    /// Process exit code: 2 for validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Parse { .. } | Error::Io { .. } | Error::Config(_) => 2,
            Error::Arbitrage { .. } | Error::Numerical(_) | Error::NotConverged { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
