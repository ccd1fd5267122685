use std::path::PathBuf;

use thiserror::Error;

use crate::symexpr::SymVarId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine reports. Display strings start with the variant
/// name so that CLI users and bindings can match on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("MissingFile: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("MalformedJson: {0}")]
    MalformedJson(String),

    #[error("MalformedInput: {0}")]
    MalformedInput(String),

    #[error("ShapeMismatch{}: expected {expected}, found {found}", fmt_layer(*.layer))]
    ShapeMismatch {
        layer: Option<usize>,
        expected: String,
        found: String,
    },

    #[error("InvalidLayer at layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: String },

    #[error("NonFiniteParameter at layer {layer}, offset {offset}")]
    NonFiniteParameter { layer: usize, offset: usize },

    #[error("NonFiniteActivation at layer {layer}, index {index}")]
    NonFiniteActivation { layer: usize, index: usize },

    #[error("EmptyDataset")]
    EmptyDataset,

    #[error("UnboundVariable: {0}")]
    UnboundVariable(SymVarId),

    #[error("NonlinearTerm: {0}")]
    NonlinearTerm(String),

    #[error("InvalidMarking: {0}")]
    InvalidMarking(String),

    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),

    #[error("StackUnderflow")]
    StackUnderflow,

    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

fn fmt_layer(layer: Option<usize>) -> String {
    match layer {
        Some(l) => format!(" at layer {l}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn shape(layer: Option<usize>, expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            layer,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Stable short name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MissingFile",
            Error::MalformedJson(_) => "MalformedJson",
            Error::MalformedInput(_) => "MalformedInput",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::InvalidLayer { .. } => "InvalidLayer",
            Error::NonFiniteParameter { .. } => "NonFiniteParameter",
            Error::NonFiniteActivation { .. } => "NonFiniteActivation",
            Error::EmptyDataset => "EmptyDataset",
            Error::UnboundVariable(_) => "UnboundVariable",
            Error::NonlinearTerm(_) => "NonlinearTerm",
            Error::InvalidMarking(_) => "InvalidMarking",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::StackUnderflow => "StackUnderflow",
            Error::Io(_) => "IoError",
        }
    }
}
