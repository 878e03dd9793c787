use thiserror::Error;

/// Everything that can go wrong inside the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("factorization failed at pivot {pivot} (value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("regression design is rank deficient at step {step}: basis {basis}")]
    RankDeficient { step: usize, basis: String },

    #[error("non-finite state on path {path} at step {step}")]
    NonFinite { path: usize, step: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
