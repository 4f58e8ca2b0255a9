use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {left} horizontal coordinates vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("C_alpha * 2^(alpha/2) = {0} is not an integer; exact shell comparison needs it integral")]
    NonIntegralScaledConstant(String),

    #[error("lattice has {size} points, above the brute-force limit of {limit}")]
    GuardExceeded { size: u128, limit: u128 },

    #[error("singular structured matrix parameters: {0}")]
    SingularParameters(String),

    #[error("evaluation on the non-smooth seam z_vert = 0: {0}")]
    Seam(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("level-set sampling failed after {0} attempts")]
    SamplingFailed(usize),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
