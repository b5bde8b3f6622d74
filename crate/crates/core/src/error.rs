//! Error type shared by all solver and discretization modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Mesh or decomposition parameters violate an invariant.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A function is bound to a different space than the operation expects.
    #[error("finite element space mismatch")]
    SpaceMismatch,

    /// Vector length does not match the expected DOF count.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Requested configuration is not supported (e.g. two-level dual TV).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An iterative solver failed to make progress.
    #[error("solver divergence: {0}")]
    SolverDivergence(String),

    /// An energy evaluation produced a non-finite value during a solve.
    #[error("non-finite energy at iteration {iter}")]
    NonFiniteEnergy { iter: usize },

    /// Negative curvature detected where an SPD operator was required.
    #[error("operator is not symmetric positive definite")]
    NotSpd,

    /// Internal consistency failure (construction bug, not user error).
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
