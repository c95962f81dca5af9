use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the model pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two inputs that must agree in size do not.
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension { what: &'static str, expected: usize, got: usize },

    /// Malformed scenario or table text.
    #[error("{source_name}:{line}: parse error: {msg}")]
    Parse { source_name: String, line: usize, msg: String },

    /// A mandatory configuration field is absent.
    #[error("{source_name}: missing mandatory field [{section}] {key}")]
    MissingField { source_name: String, section: &'static str, key: &'static str },

    /// A configuration value violates an invariant.
    #[error("{source_name}:{line}: invalid value for {field}: {msg}")]
    Invalid { source_name: String, field: String, line: usize, msg: String },

    /// The mobility graph has states that cannot be reached.
    #[error("grid is not strongly connected: state {state} is unreachable")]
    Disconnected { state: usize },

    /// The generator has more than one closed class (or none reachable from all states).
    #[error("chain is reducible: state {state} cannot reach the recurrent class of state {root}")]
    Reducible { state: usize, root: usize },

    /// A numerical procedure failed to produce a usable result.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A search was asked to bracket a quantity that is not monotone.
    #[error("non-monotone objective: {0}")]
    NonMonotone(String),

    /// The requested combination is not supported by the model.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad input files or parameters rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Dimension { .. }
                | Error::Parse { .. }
                | Error::MissingField { .. }
                | Error::Invalid { .. }
                | Error::Disconnected { .. }
                | Error::Unsupported(_)
                | Error::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
