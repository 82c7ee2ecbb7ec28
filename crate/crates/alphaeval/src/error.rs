//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

use crate::expr::ParseError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: u64, message: String },

    #[error("duplicate (date, symbol) pair at line {line}: {date} {symbol}")]
    DuplicateKey {
        line: u64,
        date: String,
        symbol: String,
    },

    #[error("unknown feature column `{name}` (pass --allow-extra-features to accept it)")]
    UnknownFeatureColumn { name: String },

    #[error("panel is missing required feature `{name}`")]
    MissingFeature { name: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid noise spec: {0}")]
    InvalidNoiseSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("expression failed validation: {0}")]
    Validation(String),

    #[error("icir undefined: per-date ICs have zero variance")]
    UndefinedIcir,

    #[error("sharpe undefined: returns have zero variance")]
    UndefinedSharpe,

    #[error("nav reached a non-positive value at step {step}")]
    BankruptPath { step: usize },

    #[error("covariance matrix is degenerate (all eigenvalues zero)")]
    DegenerateCovariance,

    #[error("llm transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("llm response is not a JSON array of verdicts: {message}\nraw response:\n{raw}")]
    LlmParse { message: String, raw: String },

    #[error("llm verdict mismatch: {0}")]
    VerdictMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
