use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong across the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("length mismatch: {what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("label out of range: {label} (valid classes are 1..={max})")]
    LabelOutOfRange { label: u32, max: u32 },

    #[error("empty class: class {0} has no training samples")]
    EmptyClass(u32),

    #[error("cube of {height}x{width} is smaller than patch side {side}")]
    CubeSmallerThanPatch {
        height: usize,
        width: usize,
        side: usize,
    },

    #[error("anchor ({row}, {col}) is out of bounds for patch side {side}")]
    AnchorOutOfBounds { row: usize, col: usize, side: usize },

    #[error("correlation undefined over {0} band(s); at least 2 are required")]
    TooFewBands(usize),

    #[error("empty region {0}")]
    EmptyRegion(u32),

    #[error("degenerate dictionary: every column has zero norm")]
    DegenerateDictionary,

    #[error("fewer distinct patches ({available}) than requested clusters ({requested})")]
    TooFewPatches { available: usize, requested: usize },

    #[error("requested {requested} Haar shapelets but side {side} supports at most {available}")]
    TooManyHaarShapelets {
        requested: usize,
        side: usize,
        available: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no labeled reference pixels to evaluate")]
    NothingToEvaluate,

    #[error("missing header key `{0}`")]
    MissingKey(String),

    #[error("unsupported {key} `{value}`")]
    Unsupported { key: &'static str, value: String },

    #[error("size mismatch: header implies {expected} bytes, data file has {actual}")]
    SizeMismatch { expected: u64, actual: u64 },

    #[error("ragged row {row}: expected {expected} entries, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("negative label `{0}`")]
    NegativeLabel(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
