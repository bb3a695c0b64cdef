use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed header: expected `{expected}`, found `{found}`")]
    MalformedHeader { expected: String, found: String },

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("invalid GeoJSON: {0}")]
    GeoJson(String),

    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    CoordinateOutOfRange { lat: f64, lon: f64 },

    #[error("duplicate amenity `{0}` in statistics table")]
    DuplicateAmenity(String),

    #[error("amenity `{amenity}` declares category {declared}, but its mean {mean} implies category {expected}")]
    CategoryMismatch {
        amenity: String,
        mean: f64,
        declared: u8,
        expected: u8,
    },

    #[error("unknown {kind} `{value}`")]
    UnknownVariant { kind: &'static str, value: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("distribution supports differ")]
    SupportMismatch,

    #[error("distribution is not normalized (mass {0})")]
    NotNormalized(f64),

    #[error("distribution has zero mass")]
    ZeroMass,

    #[error("not enough rows: need at least {needed}, have {have}")]
    TooFewRows { needed: usize, have: usize },

    #[error("intervals are not ordered best-similarity-first")]
    Unordered,

    #[error("missing {0}")]
    Missing(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
