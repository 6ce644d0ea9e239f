use std::path::PathBuf;

use thiserror::Error;

use crate::model::KeyframeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid keyframe id `{0}` (expected `video:segment`)")]
    InvalidId(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("invalid grid cell {0}")]
    InvalidCell(String),
    #[error("invalid bounding box {0:?}")]
    InvalidBox([f64; 4]),
    #[error("label `{0}` is empty after normalization")]
    EmptyLabel(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("tag `{tag}` has non-positive relevance {relevance}")]
    NonPositiveRelevance { tag: String, relevance: f64 },
    #[error("cannot fit an encoder on an empty sample")]
    EmptySample,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("feature vector contains a non-finite value")]
    NonFinite,
    #[error("invalid encoder parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Error)]
pub enum ColorError {
    #[error("palette line {line}: {reason}")]
    PaletteSyntax { line: usize, reason: String },
    #[error("palette must have exactly 32 distinct colors, found {0}")]
    PaletteSize(usize),
    #[error("image is {width}x{height}, must be at least 7x7")]
    ImageTooSmall { width: u32, height: u32 },
    #[error("cannot decode image: {0}")]
    Decode(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("keyframe {0} is already indexed")]
    DuplicateId(KeyframeId),
    #[error("unknown keyframe {0}")]
    UnknownId(KeyframeId),
    #[error("index directory {0} has no manifest")]
    MissingManifest(PathBuf),
    #[error("unsupported index format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Codec(#[from] bincode::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("query has neither tags nor canvas boxes")]
    EmptySpec,
    #[error("invalid query: {0}")]
    InvalidSpec(String),
    #[error("unknown keyframe {0}")]
    UnknownId(KeyframeId),
    #[error("similarity search needs a fitted feature encoder")]
    NoEncoder,
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth is empty")]
    EmptyTruth,
    #[error("log line {line}: {source}")]
    LogSyntax { line: usize, source: serde_json::Error },
    #[error("log line {line}: {reason}")]
    InvalidEntry { line: usize, reason: String },
    #[error("unsupported log format: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {reason}")]
    Syntax { path: PathBuf, line: usize, reason: String },
    #[error("no keyframe could be indexed")]
    NothingIndexed,
    #[error("{0} already holds an index")]
    OutputExists(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
