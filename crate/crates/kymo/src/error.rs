use thiserror::Error;

/// Errors surfaced by solvers, the time stepper and configuration parsing.
#[derive(Debug, Error)]
pub enum KymoError {
    #[error("linear solver failed to converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("negative value {value:.3e} in cell {cell} passed to an operation requiring a nonnegative field")]
    NegativeInput { cell: usize, value: f64 },

    #[error("motility domain violation: {0}")]
    DomainViolation(String),

    #[error("solver output lost positivity: min value {min:.3e} below guard {guard:.3e}")]
    PositivityLoss { min: f64, guard: f64 },

    #[error("invalid configuration:\n{}", .violations.join("\n"))]
    ConfigInvalid { violations: Vec<String> },

    #[error("config parse error: {0}")]
    ParseError(String),

    #[error("lyapunov functional requires the exp-decay motility, got {0}")]
    WrongMotility(String),

    #[error("experiment needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("manufactured-solution source table inconsistent: {0}")]
    MmsInconsistent(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KymoError>;
