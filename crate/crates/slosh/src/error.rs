use thiserror::Error;

/// Errors produced by mesh generation, assembly, solvers and postprocessing.
#[derive(Debug, Error)]
pub enum SloshError {
    #[error("invalid container spec: {0}")]
    InvalidSpec(String),

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("degenerate element {index}: jacobian {jacobian:e}")]
    DegenerateElement { index: usize, jacobian: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("singular operator: {0}")]
    SingularOperator(String),

    #[error("incompatible data: {0}")]
    IncompatibleData(String),

    #[error("root finder failed to converge: {0}")]
    ConvergenceFailure(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("eigenvalue is not simple: {0}")]
    NotSimple(String),

    #[error("mode tracking failure: {0}")]
    ModeTrackingFailure(String),

    #[error("identity violation in {check}: residual {residual:e}")]
    IdentityViolation { check: String, residual: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SloshError>;
