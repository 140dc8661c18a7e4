use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid input (dimension mismatch, point outside the model, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// Parameters outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature failed to reach the requested tolerance.
    #[error("accuracy error: requested {requested:e}, achieved {achieved:e}")]
    Accuracy { requested: f64, achieved: f64 },

    /// Kernel evaluated on its diagonal.
    #[error("singular configuration: {0}")]
    Singular(String),

    /// Non-finite value produced during integration.
    #[error("evaluation error at node {node}: non-finite integrand")]
    NonFinite { node: usize },

    /// Operation requested on a configuration it does not support.
    #[error("unsupported case: {0}")]
    Unsupported(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
