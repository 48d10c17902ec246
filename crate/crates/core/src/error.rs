use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("image must be square and non-empty, got {height}x{width}")]
    NonSquareImage { height: usize, width: usize },

    #[error("image contains a non-finite value at channel {channel}, index {index}")]
    NonFiniteValue { channel: usize, index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error(
        "spectrum violates Hermitian symmetry at frequency ({u},{v}): \
         |F(u,v) - conj(F(-u,-v))| = {deviation:.3e} exceeds {tolerance:.3e}"
    )]
    HermitianViolation {
        u: i32,
        v: i32,
        deviation: f64,
        tolerance: f64,
    },

    #[error("side must be even, got {side}")]
    OddSide { side: usize },

    #[error("need at least 2 bands, got {n_bands}")]
    TooFewBands { n_bands: usize },

    #[error("frequency ({u},{v}) is outside the {side}x{side} grid")]
    FrequencyOutOfRange { u: i32, v: i32, side: usize },

    #[error("mask is not point-symmetric: bit({u},{v}) != bit(-{u},-{v})")]
    AsymmetricMask { u: i32, v: i32 },

    #[error("keep set is empty; the filter would zero the image")]
    EmptyKeepSet,

    #[error("cutoff {cutoff} outside valid range (0, {max}]")]
    InvalidCutoff { cutoff: f64, max: f64 },

    #[error("max radius must be >= 1, got {r}")]
    InvalidMaxRadius { r: u32 },

    #[error("class {class} has no sampleable frequencies under the dataset spec")]
    EmptyRadiusSet { class: usize },

    #[error("invalid class index {class} (dataset has {n_classes} classes)")]
    InvalidClass { class: usize, n_classes: usize },

    #[error("label {label} out of range for {n_classes} classes")]
    InvalidLabel { label: usize, n_classes: usize },

    #[error("prediction/label lengths differ: {preds} vs {labels}")]
    LengthMismatch { preds: usize, labels: usize },

    #[error("confusion matrices disagree on class {class} row sum: {left} vs {right}")]
    RowSumMismatch {
        class: usize,
        left: u64,
        right: u64,
    },

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("need at least 2 classes, got {n_classes}")]
    TooFewClasses { n_classes: usize },

    #[error("no dominant frequency map available for class {class}")]
    MissingDfm { class: usize },

    #[error("dataset split '{split}' is missing or empty")]
    MissingSplit { split: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("external prediction table has no entry for id '{id}'")]
    MissingPrediction { id: String },

    #[error("percent {x} outside (0, 100]")]
    InvalidPercent { x: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad tensor container at byte {offset}: {reason}")]
    TensorFormat {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("{path}: {reason}")]
    BadManifest { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    ImageCodec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
