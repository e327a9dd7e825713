use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("unknown label column `{0}`")]
    UnknownLabelColumn(String),

    #[error("malformed Monk line {line}: {message}")]
    MalformedMonkLine { line: usize, message: String },

    #[error("feature `{feature}`: symbol `{symbol}` was not seen in the training data")]
    UnknownSymbol { feature: String, symbol: String },

    #[error("class `{0}` was not seen in the training data")]
    UnknownClass(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite value in input vector")]
    NonFinite,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("k = {k} exceeds the {available} available reference vectors")]
    KTooLarge { k: usize, available: usize },

    #[error("empty k range [{0}, {1}]")]
    EmptyRange(usize, usize),

    #[error("model pool: {0}")]
    Pool(String),
}
