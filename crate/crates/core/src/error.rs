use thiserror::Error;

pub type Result<T> = std::result::Result<T, FsbpError>;

#[derive(Debug, Error)]
pub enum FsbpError {
    #[error("invalid interval [{left}, {right}]: left endpoint must be below right endpoint")]
    InvalidInterval { left: f64, right: f64 },

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("could not parse space specification `{input}`: {reason}")]
    SpaceSyntax { input: String, reason: String },

    #[error("node {node} lies outside [{left}, {right}]")]
    NodeOutsideInterval { node: f64, left: f64, right: f64 },

    #[error("duplicate RBF center {0}")]
    DuplicateCenter(f64),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Gauss-Lobatto Newton iteration did not converge for N = {0}")]
    NewtonDivergence(usize),

    #[error("quadrature constraints are inconsistent on this grid (residual {residual:e})")]
    InconsistentConstraints { residual: f64 },

    #[error("no positive exact quadrature rule found for N in {start}..={max}")]
    NoPositiveRule { start: usize, max: usize },

    #[error("grid is not unisolvent for the space: rank {rank} < dimension {dim}")]
    NotUnisolvent { rank: usize, dim: usize },

    #[error("quadrature rule is not exact on the derivative-of-products space (residual {residual:e})")]
    RuleNotExact { residual: f64 },

    #[error("operator system residual {residual:e} exceeds tolerance")]
    OperatorResidual { residual: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("SVD did not converge")]
    SvdFailure,

    #[error("solution became non-finite at t = {t}")]
    Instability { t: f64 },

    #[error("characteristic tracing failed at x = {x}, t = {t}: {reason}")]
    Characteristic { x: f64, t: f64, reason: String },

    #[error("operator verification failed: {0}")]
    Verification(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed operator file: {0}")]
    Format(String),
}
