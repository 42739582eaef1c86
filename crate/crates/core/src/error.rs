use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A point lies outside the set where the operation is defined.
    #[error("domain error at {point:?}: {reason}")]
    Domain { point: Vec<f64>, reason: String },

    /// A field evaluated to a non-finite number.
    #[error("non-finite evaluation at {point:?}: {what}")]
    Evaluation { point: Vec<f64>, what: String },

    /// A structural hypothesis (ellipticity, positivity of the gap) failed.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("assembly error at node {node}: {reason}")]
    Assembly { node: usize, reason: String },

    #[error("solver error: {reason} (residual history {history:?})")]
    Solver { reason: String, history: Vec<f64> },

    /// Measured data cannot be used as requested (e.g. log of a non-positive value).
    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    pub(crate) fn domain(point: &[f64], reason: impl Into<String>) -> Self {
        Error::Domain {
            point: point.to_vec(),
            reason: reason.into(),
        }
    }
}
