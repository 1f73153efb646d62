use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A parameter violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("quadrature did not converge on [{a}, {b}] (error estimate {estimate:e})")]
    Quadrature { a: f64, b: f64, estimate: f64 },

    #[error("singular metric at {point:?} (condition estimate {condition:e})")]
    SingularMetric { point: Vec<f64>, condition: f64 },

    #[error("search exhausted: {0}")]
    Exhausted(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("under-resolved grid: {0}")]
    Resolution(String),

    #[error("CFL condition violated: dt = {dt:e} exceeds limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("scan failed at lambda = {lambda}: {source}")]
    AtLambda {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn at_lambda(self, lambda: f64) -> Self {
        match self {
            e @ Error::AtLambda { .. } => e,
            e => Error::AtLambda {
                lambda,
                source: Box::new(e),
            },
        }
    }

    /// True when the error stems from bad input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Domain(_) | Error::Cfl { .. } => true,
            Error::AtLambda { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
