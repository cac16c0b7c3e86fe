use std::io;
use std::path::PathBuf;

use crate::posit::PositConfig;
use crate::tensor::Numeric;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid posit format nbits={nbits} es={es}: {reason}")]
    InvalidFormat { nbits: u32, es: u32, reason: &'static str },

    #[error("posit format mismatch: {left} vs {right} (convert explicitly before mixing formats)")]
    FormatMismatch { left: PositConfig, right: PositConfig },

    #[error("numeric kind mismatch: {left} vs {right}")]
    KindMismatch { left: Numeric, right: Numeric },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{0}")]
    Usage(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("dataset {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
