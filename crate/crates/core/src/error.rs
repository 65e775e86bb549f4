use thiserror::Error;

/// Errors surfaced by grid construction, constraint projection and the
/// solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid parameter: {0}")]
    InvalidGrid(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("invalid norm spec: {0}")]
    InvalidNormSpec(String),

    #[error("invalid exponents: {0}")]
    ExponentOutOfRange(String),

    #[error("trivial function")]
    TrivialFunction,

    #[error("constraint unsatisfiable")]
    ConstraintUnsatisfiable,

    #[error("sign inconsistency: {0}")]
    SignInconsistency(String),

    #[error("non-coercive system")]
    NonCoerciveSystem,

    #[error("ordering violated: {0}")]
    OrderingViolated(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
