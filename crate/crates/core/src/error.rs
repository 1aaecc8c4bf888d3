use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("point is behind the camera (z = {z} mm)")]
    BehindCamera { z: f64 },

    #[error("depth must be positive, got {0} mm")]
    NonPositiveDepth(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed PFM: {0}")]
    MalformedPfm(String),

    #[error("mask is empty")]
    EmptyMask,

    #[error("mask has {found} pixels, at least {required} required")]
    MaskTooSmall { found: usize, required: usize },

    #[error("no masked pixel carries a valid depth")]
    NoValidDepth,

    #[error("degenerate correspondences: {0} inlier pairs, at least 3 required")]
    DegenerateCorrespondence(usize),

    #[error("pose estimation failed: every hypothesis scored zero")]
    EstimationFailed,

    #[error("index {index} out of range for {len} meshes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("{0}")]
    Metric(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("frame {frame_id}: {message}")]
    Frame { frame_id: u32, message: String },

    #[error("pose sampling failed: {0}")]
    SamplingFailed(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
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

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
