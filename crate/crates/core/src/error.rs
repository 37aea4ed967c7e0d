use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{field}`: expected {expected}, got {actual}")]
    DimensionMismatch {
        field: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid value for `{field}`: {reason}")]
    InvalidValue { field: &'static str, reason: String },

    #[error("non-finite entry in `{field}` at {location}")]
    NonFinite {
        field: &'static str,
        location: String,
    },

    #[error("step sizes violate 1/tau - sigma*|H|^2 >= beta/2 (tau={tau}, sigma={sigma}, |H|={op_norm}, beta={beta})")]
    StepSize {
        tau: f64,
        sigma: f64,
        op_norm: f64,
        beta: f64,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("iterate diverged (non-finite value) at iteration {iter}")]
    Diverged { iter: usize },

    #[error(
        "cannot place {requested} interactions: only {capacity} slots among nonzero main effects"
    )]
    InteractionCapacity { requested: usize, capacity: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("schema mismatch: missing or invalid fields {0:?}")]
    Schema(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn mismatch(
    field: &'static str,
    expected: impl ToString,
    actual: impl ToString,
) -> Error {
    Error::DimensionMismatch {
        field,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
