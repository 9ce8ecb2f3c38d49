use alloc::string::String;

use crate::math::{linalg::LinalgError, quad::QuadratureError};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario field `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("path delay of {delay} samples does not fit in the {cp}-sample cyclic prefix")]
    DelayExceedsCp { delay: usize, cp: usize },
    #[error("unsupported modulation order {0}; expected 4, 16, 64 or 256")]
    UnsupportedModulation(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("predistorter training diverged in block {block}")]
    Divergence { block: usize },
    #[error("need at least {needed} frames, got {got}")]
    InsufficientFrames { needed: usize, got: usize },
    #[error("reference energy is zero; cannot form a gain estimate")]
    ZeroEnergy,
    #[error("equalizer coefficient is zero on subcarrier {0}")]
    ZeroCoefficient(usize),
    #[error("invalid power amplifier model: {0}")]
    PaModel(String),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), message: message.into() }
    }
}
