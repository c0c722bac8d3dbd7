use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{0}")]
    InvalidShape(String),

    #[error("axis {axis} is out of range for a rank-{rank} tensor")]
    InvalidAxis { axis: usize, rank: usize },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("loss is not connected to any tensor that requires a gradient")]
    DisconnectedGraph,

    #[error("{op}: input outside of the function domain")]
    Domain { op: &'static str },

    #[error("conv2d: input has {input} channels but the layer expects {expected}")]
    ChannelMismatch { input: usize, expected: usize },

    #[error("{op}: input {input:?} is smaller than the window {window:?}")]
    InputTooSmall {
        op: &'static str,
        input: [usize; 2],
        window: [usize; 2],
    },

    #[error("{0}: values must be binary (0 or 1)")]
    NonBinary(&'static str),

    #[error("class index {class} is out of range (expected < {classes})")]
    ClassOutOfRange { class: usize, classes: usize },

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("input size {height}x{width} is not divisible by {divisor}")]
    IndivisibleInput {
        height: usize,
        width: usize,
        divisor: usize,
    },

    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt checkpoint at byte offset {offset}: {reason}")]
    CorruptCheckpoint { offset: u64, reason: String },

    #[error("architecture mismatch: expected [{expected}], found [{found}]")]
    ArchitectureMismatch { expected: String, found: String },

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{path}:{line}: referenced file {target} does not exist")]
    DanglingPath {
        path: PathBuf,
        line: u64,
        target: PathBuf,
    },

    #[error("{0}")]
    Dataset(String),

    #[error("unsupported image format for {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
