use thiserror::Error;

/// Errors surfaced by the solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("linear solver did not converge: residual {residual:.3e} after {iterations} iterations (tol {tol:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("Newton iteration stagnated: residual {residual:.3e} after {iterations} iterations, step factor {step:.3e}")]
    NewtonStagnation {
        iterations: usize,
        residual: f64,
        step: f64,
    },

    #[error("diagonal dominance violated in row {row}: |diag| = {diag:.3e}, off-diagonal sum = {offdiag:.3e}")]
    DominanceViolation { row: usize, diag: f64, offdiag: f64 },

    #[error("genericity failure at diagonal {diagonal}: |D_p| = {determinant:.3e} below threshold {threshold:.3e}")]
    GenericityFailure {
        diagonal: usize,
        determinant: f64,
        threshold: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
