use thiserror::Error;

/// Errors raised by the simulation and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CuspError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("function `{name}` is not finite at x = {x}")]
    InvalidFunction { name: String, x: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("covariance factorization failed (jitter {jitter:e} exhausted)")]
    Conditioning { jitter: f64 },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("limit grid too small: {suspect} of {total} samples truncation-suspect; increase U")]
    GridTooSmall { suspect: usize, total: usize },

    #[error("failure budget exceeded at eps = {eps}: {failures} of {replicates} replicates failed")]
    FailureBudget {
        eps: f64,
        failures: usize,
        replicates: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CuspError {
    fn from(e: std::io::Error) -> Self {
        CuspError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CuspError>;
