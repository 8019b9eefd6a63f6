use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AwbError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AwbError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image decode error on {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("expected a 3-channel RGB raster, found {found}")]
    ChannelCount { found: String },

    #[error("black level {black_level} must be below the white point {white_point}")]
    BlackLevel { black_level: f64, white_point: f64 },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ground truth error: {0}")]
    GroundTruth(String),

    #[error("no valid pixels to select gray candidates from")]
    EmptyCandidates,

    #[error("all salient gray pixels have zero luminance")]
    DegenerateWeights,

    #[error("no valid aggregation positions for channel {channel}")]
    InsufficientEvidence { channel: usize },

    #[error("zero or negative vector component: {0}")]
    ZeroVector(String),

    #[error("step called on a finished episode")]
    EpisodeDone,

    #[error("training diverged at step {step}: {message}")]
    Divergence { step: u64, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl AwbError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AwbError::Io {
            path: path.into(),
            source,
        }
    }
}
