use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported data type code {0}")]
    UnsupportedDtype(i16),
    #[error("truncated data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("mask is not binary: voxel {index} has value {value}")]
    NonBinaryMask { index: usize, value: f32 },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("malformed raster: {0}")]
    MalformedRaster(String),
    #[error("malformed manifest line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("stale cache: {0}")]
    StaleCache(String),
    #[error("numerical fault: {0}")]
    NumericalFault(String),
    #[error("spatial dims must be even for 2x2 pooling, got {h}x{w}")]
    OddSpatialDim { h: usize, w: usize },
    #[error("pooling index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("training split is empty")]
    EmptyTrainSplit,
    #[error("loss diverged at epoch {epoch}, step {step}")]
    DivergedLoss { epoch: usize, step: usize },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("non-binary input: {0}")]
    NonBinaryInput(String),
    #[error("confusion accumulator holds no pixels")]
    EmptyAccumulator,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("malformed log line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for faults raised by the numerics rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFault(_) | Error::DivergedLoss { .. }
        )
    }
}
