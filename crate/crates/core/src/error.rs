use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("non-finite spectral value {value} at grid node {node} (lambda = {lambda})")]
    Evaluation { node: usize, lambda: f64, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    /// Carries the index of the first non-positive pivot.
    #[error("matrix is not positive definite (pivot {index})")]
    NotPositiveDefinite { index: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("all particle weights vanished at iteration {iteration}")]
    Degenerate { iteration: usize },

    #[error("tempering schedule error: {0}")]
    Schedule(String),

    #[error("invalid sampler state: {0}")]
    InvalidState(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by numerics rather than by inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Evaluation { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::Degenerate { .. }
                | Error::Schedule(_)
                | Error::InvalidState(_)
        )
    }
}
