//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (dimension mismatch, bad
    /// constant, non-finite entry, ...).
    #[error("invalid input in {context}: {message}")]
    InvalidInput { context: String, message: String },

    /// A matrix that must be (semi)definite has an eigenvalue at or below the
    /// relative floor, so an inverse or square root is not trustworthy.
    #[error("singular matrix in {context}: eigenvalue {eigenvalue:e} below floor {floor:e}")]
    SingularMatrix {
        context: String,
        eigenvalue: f64,
        floor: f64,
    },

    /// An intermediate quantity left the representable range.
    #[error("numeric overflow in {context}: {message}")]
    NumericOverflow { context: String, message: String },

    /// Trajectory optimization kept increasing the objective.
    #[error("optimization diverged after {iterations} iterations: {message}")]
    OptimizationDiverged { iterations: usize, message: String },

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss = {loss}")]
    DivergedTraining { step: usize, loss: f64 },

    /// Malformed binary or CSV input file.
    #[error("format error at byte {offset}: {message}")]
    FormatError { offset: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(context: &str, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            context: context.to_string(),
            message: message.into(),
        }
    }

    pub fn overflow(context: &str, message: impl Into<String>) -> Self {
        Error::NumericOverflow {
            context: context.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
