//! Error types shared across the library and CLI.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied configuration (orders, ranges, flags).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates a precondition (too short, non-uniform, empty).
    #[error("data error: {0}")]
    Data(String),

    /// Matrix/vector dimensions do not match an operation's contract.
    #[error("shape error: {0}")]
    Shape(String),

    /// A factorization revealed rank deficiency where full rank is required.
    #[error("rank error: {0}")]
    Rank(String),

    /// A matrix is too ill-conditioned to proceed.
    #[error("conditioning error: {0}")]
    Conditioning(String),

    /// An internal resonance prevents the requested normal-form computation.
    #[error("resonance error: {0}")]
    Resonance(String),

    /// Forced-response calibration failed.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// A numerical procedure failed to converge or verify.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code: 1 for data/configuration problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Data(_) | Error::Shape(_) | Error::Io(_) => 1,
            Error::Rank(_)
            | Error::Conditioning(_)
            | Error::Resonance(_)
            | Error::Calibration(_)
            | Error::Numerical(_) => 2,
        }
    }
}
