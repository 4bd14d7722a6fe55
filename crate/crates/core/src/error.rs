use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or record failed validation.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    /// A log line could not be decoded or violates a record invariant.
    #[error("line {line}: {message}")]
    Record {
        line: usize,
        field: Option<String>,
        message: String,
    },

    /// The request is well formed but meaningless for the given inputs
    /// (e.g. a behavior-cloning fraction for a world model).
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "frontier underdetermined: {distinct_sizes} distinct model size(s) on the envelope; \
         the frontier method needs at least 2, use the parametric fit instead"
    )]
    FrontierUnderdetermined { distinct_sizes: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no initialization converged: {0}")]
    NonConvergence(String),

    #[error("undefined correlation for '{metric}': {reason}")]
    UndefinedCorrelation { metric: String, reason: String },

    #[error("unknown estimator '{0}'")]
    UnknownEstimator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
