use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// `h(gamma, x)` diverges at `gamma = 1`; the pulse filter covers that limit.
    #[error(
        "filter h(gamma, x) is singular at gamma = 1; use the pulse filter g(x) / rate_pmp instead"
    )]
    SingularFilter,

    #[error("spectrum is identically zero")]
    DegenerateSpectrum,

    #[error("steady state undefined: both rates vanish")]
    UndefinedSteadyState,

    /// Adaptive integration stopped before reaching the requested tolerance.
    #[error("numerical failure: {message} (estimate {estimate:e}, error {error:e})")]
    Numerical {
        message: String,
        estimate: f64,
        error: f64,
    },

    /// The request would exceed a work or memory budget.
    #[error("resource limit: {0}")]
    Resource(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
