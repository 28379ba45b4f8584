//! Error type shared by every module.

use thiserror::Error;

/// Failures reported by the solvers and evaluators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A matrix expected to be positive definite failed its Cholesky factorization.
    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: String },

    /// Input violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Input lies outside the guarded numerical domain of a solver.
    #[error("input outside guarded domain: {message} (initial residual {residual:.3e})")]
    OutOfGuard { message: String, residual: f64 },

    /// An iterative solver stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A profile or parameter lies outside the domain of a functional.
    #[error("domain violation: {0}")]
    DomainViolation(String),

    /// A power-series truncation could not certify the requested tolerance.
    #[error("truncation tail bound {bound:.3e} exceeds tolerance {tol:.3e}")]
    TruncationInsufficient { bound: f64, tol: f64 },

    /// A tensorized quadrature or sampler would exceed its work budget.
    #[error("work budget exceeded: {required:.3e} > {budget:.3e}")]
    BudgetExceeded { required: f64, budget: f64 },
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
