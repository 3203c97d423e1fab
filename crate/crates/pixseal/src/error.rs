//! Crate-wide error type with a stable mapping to CLI exit codes.

use std::path::PathBuf;

/// Errors produced by the library.
///
/// Every variant maps to one of the documented CLI exit codes through
/// [`Error::exit_code`]: usage errors (1), data errors (2), I/O errors (3).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },

    #[error("cannot encode {path}: {source}")]
    Encode {
        path: PathBuf,
        source: image::ImageError,
    },

    #[error("{path}: unsupported sample depth (only 8-bit rasters are supported)")]
    UnsupportedDepth { path: PathBuf },

    #[error("{what}: dimension mismatch, expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        what: &'static str,
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("message has {got} bits, key expects {expected}")]
    MessageLength { expected: usize, got: usize },

    #[error("invalid hex message {input:?}: {reason}")]
    HexMessage { input: String, reason: String },

    #[error("invalid key file: {0}")]
    KeyFormat(String),

    #[error("invalid tensor file: {0}")]
    TensorFormat(String),

    #[error("no watermarked pixels: no pixel has detection score above the threshold")]
    NoWatermarkedPixels,

    #[error("insufficient calibration data: {got} pooled pixels, need at least {need} for target FPR {target_fpr}")]
    InsufficientPixels {
        got: usize,
        need: usize,
        target_fpr: f64,
    },

    #[error("cannot compute a centroid of an empty member set")]
    EmptyMembers,

    #[error("clustered messages have inconsistent lengths ({a} vs {b} bits)")]
    PointLength { a: usize, b: usize },

    #[error("{metric}: needs at least one positive and one negative decision")]
    EmptyClass { metric: &'static str },

    #[error("carrier generation failed: no tile satisfied the correlation bounds after {attempts} attempts")]
    CarrierGeneration { attempts: usize },

    #[error("could not place {count} disjoint masks after {attempts} attempts")]
    MaskPlacement { count: usize, attempts: usize },

    #[error("external mask kind selected but no mask files are registered")]
    NoExternalMasks,

    #[error("invalid parameter: {0}")]
    BadParam(String),

    #[error("config file {path}, line {line}: {reason}")]
    ConfigFormat {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("corpus directory {path} contains no readable images")]
    EmptyCorpus { path: PathBuf },
}

impl Error {
    /// CLI exit code for this error: 1 usage, 2 data, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Read { .. } | Error::Write { .. } | Error::Encode { .. } => 3,
            Error::BadParam(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
