use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid function lives on a different domain")]
    DomainMismatch,
    #[error("expected {expected} noise increments, got {got}")]
    ModeMismatch { expected: usize, got: usize },
    #[error("value {value} out of range: {what}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("time step {dt} violates the explicit stability bound, need dt <= {required}")]
    Cfl { dt: f64, required: f64 },
    #[error(
        "newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("wiener path incompatible with solver: {0}")]
    PathMismatch(String),
    #[error("incompatible configurations: {0}")]
    Incompatible(String),
    #[error("precondition violated at node {node}: {detail}")]
    Precondition { node: usize, detail: String },
    #[error("trajectory carries no drift selections")]
    MissingEta,
    #[error("rate fit rejected: {0}")]
    Degenerate(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
