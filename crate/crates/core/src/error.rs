use thiserror::Error;

/// Failure modes shared by every evaluator in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("gamma function pole at {0}")]
    Pole(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("accuracy target not met for {context} (best estimate {best:e}, error estimate {error:e})")]
    Accuracy {
        context: String,
        best: f64,
        error: f64,
    },
    #[error("value diverges: {0}")]
    Divergence(String),
    #[error("integrand is not integrable under the cutoff policy: {0}")]
    Integrability(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
