use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Each variant maps onto one of the CLI exit codes through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid family parameters: {0}")]
    InvalidFamily(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("polynomial degree {degree} exceeds the allowed maximum {max}")]
    DegreeOverflow { degree: u32, max: u32 },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("quadrature grid not converged: |delta log Z| = {delta:e} exceeds {tol:e}")]
    GridNotConverged { delta: f64, tol: f64 },

    #[error("gram matrix singular beyond ridge rescue; null directions: {}", .0.join(", "))]
    SingularGram(Vec<String>),

    #[error("parameter is not separable: monomial {0} couples coordinates")]
    NonSeparable(String),

    #[error("markov chain diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("sample set is empty")]
    EmptySamples,

    #[error("optimizer did not converge after {iterations} iterations (grad inf-norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("DIMACS parse error at line {line}: {msg}")]
    Dimacs { line: usize, msg: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 1 I/O and input formats, 2 usage, 3 numerical, 4 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Json(_) | Error::Dimacs { .. } | Error::Format(_) => 1,
            Error::InvalidFamily(_)
            | Error::DimensionMismatch { .. }
            | Error::DegreeOverflow { .. }
            | Error::Precondition(_)
            | Error::NonSeparable(_)
            | Error::EmptySamples => 2,
            Error::NonFinite(_)
            | Error::Quadrature(_)
            | Error::GridNotConverged { .. }
            | Error::SingularGram(_)
            | Error::Diverged { .. } => 3,
            Error::NonConvergence { .. } => 4,
        }
    }
}
