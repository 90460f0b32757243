//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("case {id}: {msg}")]
    InvalidCase { id: u32, msg: String },

    #[error("row {row}, column {column}: {msg}")]
    CsvCell {
        row: usize,
        column: String,
        msg: String,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("case base error: {0}")]
    CaseBase(String),

    #[error("statistics error: {0}")]
    Stats(String),

    #[error("generator error: {0}")]
    Generator(String),

    #[error("mrf error: {0}")]
    Mrf(String),

    #[error("component of {nodes} nodes with {assignments} assignments is too large for exact enumeration")]
    EnumerationTooLarge { nodes: usize, assignments: u128 },

    #[error("retrieval error: {0}")]
    Retrieval(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
