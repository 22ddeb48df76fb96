use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. The CLI maps the variants onto
/// process exit codes via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural precondition (family, dimension, admissibility) failed.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Quadrature or transform did not meet its target accuracy.
    #[error("numerical failure: {message} (achieved error {achieved:.3e})")]
    Numerical { message: String, achieved: f64 },

    /// An integral that must be finite was detected to diverge.
    #[error("divergent integral: {0}")]
    Divergent(String),

    /// A fixed-point iteration failed to converge or diverged.
    #[error("convergence failure after {iterations} iterations: {message}")]
    Convergence {
        message: String,
        iterations: usize,
        trace: Vec<f64>,
    },

    /// A computational budget (node count, jump count) was exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// A configuration file could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub fn numerical(msg: impl Into<String>, achieved: f64) -> Self {
        Error::Numerical {
            message: msg.into(),
            achieved,
        }
    }

    /// 1 for domain-type failures, 2 for numeric-tolerance failures,
    /// 65 for configuration parse failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Precondition(_) | Error::Resource(_) | Error::Io { .. } => 1,
            Error::Numerical { .. } | Error::Divergent(_) | Error::Convergence { .. } => 2,
            Error::Parse { .. } => 65,
        }
    }
}
