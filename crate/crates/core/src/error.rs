use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("aspect ratio must be positive and finite, got {0}")]
    InvalidAlpha(f64),

    #[error("no nonzero collision for p = {p}")]
    NoCollision { p: i64 },

    #[error("collision root bracket not found for p = {p}")]
    BracketNotFound { p: i64 },

    #[error("eigensolver failed to converge (mu = {mu}, modes = {modes})")]
    EigenSolve { mu: f64, modes: usize },

    #[error("truncation of {modes} modes is too small (need at least {min})")]
    TooFewModes { modes: usize, min: usize },

    #[error("solvability not satisfied: projection {projection:.3e} exceeds {bound:.3e}")]
    SolvabilityViolated { projection: f64, bound: f64 },

    #[error("solvability condition is not affine in the order-{order} unknowns (second difference {residual:.3e})")]
    NonAffine { order: usize, residual: f64 },

    #[error("no instability at O(eps^{p}): solvability coupling vanishes")]
    NoInstability { p: i64 },

    #[error("group velocities coincide at the collision (difference {0:.3e})")]
    DegenerateGroupVelocity(f64),

    #[error("asymptotics implemented for p = 2 and p = 3 only, got p = {0}")]
    UnsupportedOrder(i64),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
