use thiserror::Error;

/// Errors raised by filtering, smoothing, sampling and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Every importance weight of a cloud is zero (log weight `-inf`).
    #[error("degenerate particle cloud at time {time}: all weights vanished")]
    DegenerateCloud { time: usize },

    /// Every term `w_k^i q(xi_k^i, x)` of a backward kernel is zero.
    #[error("degenerate backward kernel at time {time}: all transition terms vanished")]
    DegenerateBackwardKernel { time: usize },

    #[error("accept-reject backward sampling requires a transition density bound")]
    MissingTransitionBound,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateCloud { .. } | Error::DegenerateBackwardKernel { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
