use thiserror::Error;

/// Errors raised by problem construction, simulation and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite objective value {value} at sa iteration {iteration}, point {point:?}")]
    NonFiniteObjective {
        iteration: u32,
        point: Vec<f64>,
        value: f64,
    },

    #[error("subproblem at period {period} failed: {source}")]
    Period {
        period: usize,
        #[source]
        source: Box<EmcError>,
    },

    #[error("solver did not converge after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, EmcError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(EmcError::InvalidArgument(msg.into()))
}
