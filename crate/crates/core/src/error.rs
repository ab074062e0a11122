use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A model or mesh parameter violates its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An argument lies outside the domain of the evaluated function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A callable produced a non-finite sample during quadrature.
    #[error("non-finite value while evaluating {what} on triangle {triangle}")]
    Evaluation { what: &'static str, triangle: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The matrix handed to the sparse constructor is not a valid SPD CSR matrix.
    #[error("invalid sparse matrix: {0}")]
    InvalidMatrix(String),

    #[error("conjugate gradients did not converge after {iters} iterations (relative residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    /// `p^T A p <= 0` was observed, so the operator is not positive definite.
    #[error("conjugate gradient breakdown at iteration {iter} (p^T A p = {curvature:e})")]
    Breakdown { iter: usize, curvature: f64 },

    #[error("energy increased at step {step} by {delta:e}")]
    EnergyIncrease { step: usize, delta: f64 },

    #[error("mesh format error at line {line}: {message}")]
    MeshFormat { line: usize, message: String },
}

impl Error {
    /// True for failures of the numerical procedures themselves (as opposed
    /// to bad inputs).
    pub fn is_numeric_failure(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::Breakdown { .. } | Error::EnergyIncrease { .. })
    }
}
