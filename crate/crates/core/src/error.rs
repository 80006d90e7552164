//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by problem definitions, the solver driver, the
/// optimization tree, and tree (de)serialization.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector had the wrong length for the operation.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A configuration value violated its invariant.
    #[error("invalid {what}: {detail}")]
    InvalidValue { what: &'static str, detail: String },

    /// Tree initialization was handed a failed solve for the root.
    #[error("root solve did not converge; cannot initialize optimization tree")]
    InfeasibleRoot,

    /// A node id that is not present in the tree.
    #[error("unknown node id {0}")]
    UnknownNodeId(usize),

    /// A parameter id that is not present in the tree.
    #[error("unknown parameter id {0}")]
    UnknownParamId(usize),

    /// A (node, parameter) pair was recorded as attempted twice.
    #[error("attempt ({node_id}, {lambda_id}) already recorded")]
    DuplicateAttempt { node_id: usize, lambda_id: usize },

    /// A serialized tree could not be parsed.
    #[error("tree parse error at line {line}: {message}")]
    TreeParse { line: usize, message: String },

    /// I/O failure while reading or writing a tree stream.
    #[error("tree i/o error: {0}")]
    TreeIo(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
