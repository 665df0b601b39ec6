use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coefficient `{name}` is not admissible at x = {x}: {reason}")]
    CoefficientDomain {
        name: &'static str,
        x: f64,
        reason: &'static str,
    },

    #[error("quadrature did not converge: estimated error {estimate:e} exceeds tolerance {tolerance:e}")]
    Tolerance { estimate: f64, tolerance: f64 },

    #[error("degenerate interval ({a}, {b})")]
    DegenerateInterval { a: f64, b: f64 },

    #[error("ill-conditioned system: condition estimate {condition:e} exceeds {limit:e} ({context})")]
    IllConditioned {
        condition: f64,
        limit: f64,
        context: String,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid rate: {0}")]
    InvalidRate(String),

    #[error("mollification error: {0}")]
    Mollification(String),

    #[error("method not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
