use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
    #[error("channel mismatch: {0}")]
    ChannelMismatch(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("quality {0} outside 1..=100")]
    QualityOutOfRange(i32),
    #[error("zero dimension in resize target {0}x{1}")]
    ZeroDimension(usize, usize),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("invalid quality class {0}")]
    InvalidClass(String),
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("network has {0} parameters, too many for an exhaustive gradient check")]
    TooManyParameters(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("checkpoint version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint checksum mismatch")]
    ChecksumMismatch,
    #[error("training diverged: {0}")]
    NonFinite(String),

    #[error("image {width}x{height} smaller than patch size {patch}")]
    ImageTooSmall { width: usize, height: usize, patch: usize },
    #[error("untrained model: {0}")]
    UntrainedModel(String),

    #[error("invalid K={k} for {classes} quality classes")]
    InvalidK { k: usize, classes: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("weights do not form a distribution: {0}")]
    BadWeights(String),
    #[error("no analyzer registered for class {0}")]
    MissingAnalyzer(String),

    #[error("item carries no ground truth: {0}")]
    MissingGroundTruth(String),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("incomplete inputs: {0}")]
    IncompleteInputs(String),

    #[error("refusing to write outside the work dir: {0}")]
    OutsideWorkDir(PathBuf),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    ValidationErrors(Vec<String>),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
