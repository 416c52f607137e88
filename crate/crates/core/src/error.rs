use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("mixing moments undefined for nu = {0} (need nu > 2)")]
    MomentsUndefined(f64),

    #[error("non-finite log-likelihood contribution at observation {index}")]
    NonFiniteTerm { index: usize },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("fit did not converge:\n{}", .0.join("\n"))]
    NoConvergence(Vec<String>),

    #[error("information matrix is singular or not positive definite")]
    SingularInformation,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {msg}")]
    Input { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
