use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, RadError>;

#[derive(Debug, Error)]
pub enum RadError {
    /// Arrays, rasters or parameter blocks whose dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("event at {time_ms} ms on channel {channel} falls in bin {bin}, raster has {steps} steps")]
    OutOfRange {
        channel: u16,
        time_ms: f32,
        bin: usize,
        steps: usize,
    },

    #[error("invalid event stream: {0}")]
    InvalidStream(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("kernel support of {support_steps} steps too short: |k({support_steps})| = {tail:e} exceeds {bound:e}")]
    KernelSupport {
        support_steps: usize,
        tail: f64,
        bound: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite {what} at parameter {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RadError {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        RadError::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RadError::Io {
            path: path.into(),
            source,
        }
    }
}
