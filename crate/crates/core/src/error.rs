use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sequence too short: {found} frame(s), need at least {required}")]
    SequenceTooShort { found: usize, required: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("crop rectangle {rect} lies outside a {width}x{height} frame")]
    CropOutOfBounds {
        rect: String,
        width: usize,
        height: usize,
    },

    #[error("bad filter specification: {0}")]
    BadFilterSpec(String),

    #[error("no reliable motion vectors in sequence {0}")]
    EmptyField(String),

    #[error("segment grid of area {area} lies entirely outside the image")]
    LayoutOutOfImage { area: u8 },

    #[error("motion field has no vectors")]
    EmptyMotionField,

    #[error("record {0} has no label")]
    MissingLabel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("repeat {repeat}, fold {fold}: {source}")]
    Fold {
        repeat: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}` failed for {input}: {source}")]
    Stage {
        stage: &'static str,
        input: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    /// True for failures of the numerical machinery rather than of the data.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::TrainingDiverged { .. } => true,
            Error::Fold { source, .. } | Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
