use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid model at `{field}`: {rule}")]
    Invariant { field: String, rule: String },

    #[error("dimension mismatch at `{field}`: expected {expected}, got {got}")]
    Dimension {
        field: String,
        expected: usize,
        got: usize,
    },

    #[error("value {value} outside domain [{lo}, {hi}] in {what}")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// A modelling assumption (heavy traffic, uniqueness, resource pooling)
    /// does not hold for the supplied network.
    #[error("{0}")]
    Assumption(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    Argument(String),
}

impl Error {
    pub(crate) fn invariant(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
