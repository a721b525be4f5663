use thiserror::Error;

use crate::fitness::FitnessResult;

/// Errors produced by every stage of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: u64, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("duplicate GDP sample for {country} in {year}")]
    DuplicateSample { country: String, year: i32 },

    #[error("non-positive GDP per capita for {country} in {year} (line {line})")]
    NonPositiveGdp { country: String, year: i32, line: u64 },

    #[error("matrix is empty after binarization")]
    EmptyMatrix,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("zero denominator: product {0} has no exporter with positive fitness")]
    ZeroDenominator(String),

    #[error("fitness iteration did not converge after {} iterations (residual {:.3e})", .0.iterations, .0.residual)]
    NonConvergence(Box<FitnessResult>),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("unknown entity: {0}")]
    UnknownEntity(String),

    #[error("country {country} does not currently export {product}")]
    NotCurrentlyExported { country: String, product: String },

    #[error("entity sets differ: {0}")]
    EntityMismatch(String),

    #[error("insufficient analogues: found {found}, need {required}")]
    InsufficientAnalogues { found: usize, required: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad error class used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Convergence,
    Degenerate,
    InsufficientData,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Input => 1,
            ErrorClass::Convergence => 2,
            ErrorClass::Degenerate => 3,
            ErrorClass::InsufficientData => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Input => "input",
            ErrorClass::Convergence => "convergence",
            ErrorClass::Degenerate => "degenerate",
            ErrorClass::InsufficientData => "insufficient-data",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NonConvergence(_) | Error::ZeroDenominator(_) => ErrorClass::Convergence,
            Error::DegenerateSpectrum(_) => ErrorClass::Degenerate,
            Error::InsufficientAnalogues { .. } => ErrorClass::InsufficientData,
            _ => ErrorClass::Input,
        }
    }

    /// Stable short identifier of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedRecord { .. } => "MalformedRecord",
            Error::EmptyInput(_) => "EmptyInput",
            Error::DuplicateSample { .. } => "DuplicateSample",
            Error::NonPositiveGdp { .. } => "NonPositiveGdp",
            Error::EmptyMatrix => "EmptyMatrix",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::ZeroDenominator(_) => "ZeroDenominator",
            Error::NonConvergence(_) => "NonConvergence",
            Error::DegenerateSpectrum(_) => "DegenerateSpectrum",
            Error::UnknownEntity(_) => "UnknownEntity",
            Error::NotCurrentlyExported { .. } => "NotCurrentlyExported",
            Error::EntityMismatch(_) => "EntityMismatch",
            Error::InsufficientAnalogues { .. } => "InsufficientAnalogues",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
