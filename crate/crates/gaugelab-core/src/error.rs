use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("index out of range: {0}")]
    IndexRange(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("factor mismatch: {0}")]
    FactorMismatch(String),

    #[error("mixed-parity fermionic operator cannot be embedded")]
    MixedParity,

    #[error("operator is not Hermitian (deviation {deviation:.3e}, tolerance {tol:.3e})")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("eigensolver did not converge after {restarts} restarts: {detail}")]
    NonConvergence { restarts: usize, detail: String },

    #[error("norm estimate did not converge: best bracket [{lower:.6e}, {upper:.6e}]")]
    NormBracket { lower: f64, upper: f64 },

    #[error("dimension budget exceeded: need {needed}, budget {budget} ({context})")]
    Budget {
        needed: usize,
        budget: usize,
        context: String,
    },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("series tolerance {tol:.3e} unreachable at order cap {cap}: remainder {remainder:.3e}")]
    SeriesCap { tol: f64, cap: usize, remainder: f64 },

    #[error("projector defect {defect:.3e} above tolerance {tol:.3e}")]
    ProjectorDefect { defect: f64, tol: f64 },

    #[error("commutant test failed: ||[A, P]|| = {norm:.3e} exceeds tolerance {tol:.3e}")]
    NotInCommutant { norm: f64, tol: f64 },

    #[error("invalid group element: {0}")]
    InvalidGroupElement(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
