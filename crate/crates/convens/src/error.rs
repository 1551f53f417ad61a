//! Error type shared across the solver.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Configuration rejected before any computation starts.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Mesh construction or query failure.
    #[error("mesh error: {0}")]
    Mesh(String),

    /// Reference-element evaluation outside its domain or unsupported request.
    #[error("element error: {0}")]
    Element(String),

    /// Assembly rejected (role mismatch, bad coefficient, missing boundary value).
    #[error("assembly error: {0}")]
    Assembly(String),

    /// Matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Factorization hit a (numerically) singular matrix.
    #[error("singular matrix{}", pivot.map(|p| format!(" (zero pivot near row {p})")).unwrap_or_default())]
    Singular { pivot: Option<usize> },

    /// A solve produced non-finite values.
    #[error("non-finite value detected in {context}")]
    NonFinite { context: String },

    /// The timestep halving loop hit its cap without satisfying the stability condition.
    #[error("timestep halving limit ({limit}) exceeded at t = {t}")]
    HalvingLimit { limit: u32, t: f64 },

    /// Bred-vector rescaling is undefined because the trajectories coincide.
    #[error("zero separation between control and perturbed runs; bred vector undefined")]
    ZeroSeparation,

    /// A diagnostic quantity is undefined for the given inputs.
    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
