//! Error type shared across the crate.

use std::path::PathBuf;

/// Errors produced by frame/flow I/O, shape validation, and fitting.
#[derive(Debug, thiserror::Error)]
pub enum SdcError {
    /// Two dense fields that must share a shape do not.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    /// A constructor was handed dimensions or parameters that cannot
    /// describe a valid field (zero extent, even kernel size, ...).
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    /// The input image is too small for the requested operation.
    #[error("image too small: {0}")]
    ImageTooSmall(String),

    /// An image file could not be decoded or encoded.
    #[error("image error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    /// Unsupported channel count for an image operation.
    #[error("unsupported channel count {channels}: {context}")]
    UnsupportedChannels { channels: usize, context: String },

    /// A binary file (`.flo`, fitted parameters) is malformed.
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    /// Plain I/O failure.
    #[error("i/o error for {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A configuration file entry could not be parsed.
    #[error("bad config entry: {0}")]
    BadConfig(String),

    /// Fitting produced a non-finite loss or gradient.
    #[error("numerical failure: {0}")]
    Numerics(String),
}

impl SdcError {
    /// Convenience constructor for shape mismatches.
    pub fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        SdcError::ShapeMismatch {
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
