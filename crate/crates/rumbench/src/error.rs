//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by dataset handling, estimation and analysis.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration value (negative sizes, empty layers, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Shapes of inputs do not line up (feature counts, fold sizes, ...).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An operation was asked of data outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation only applies to a different model or error family.
    #[error("family mismatch: {0}")]
    Family(String),

    /// Iterative optimisation stopped before reaching the tolerance.
    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    /// Training produced non-finite losses or parameters.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// A persisted model document failed validation.
    #[error("invalid model document: {0}")]
    InvalidModel(String),

    /// A persisted model document has an unsupported version.
    #[error("unsupported model document version {0}")]
    UnsupportedVersion(u32),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand for [`Error::Config`].
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Shorthand for [`Error::Dimension`].
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    /// Shorthand for [`Error::Domain`].
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
