//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions of the operands do not match.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An index is out of range.
    #[error("index out of range: {0}")]
    Index(String),

    /// A configuration value is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A file could not be parsed.
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    /// Cube payload is shorter or longer than the header demands.
    #[error("cube payload size mismatch in {path}: expected {expected} bytes, got {actual}")]
    CubePayload {
        path: String,
        expected: usize,
        actual: usize,
    },

    /// Cube header declares an unsupported layout.
    #[error("cube header mismatch in {path}: {detail}")]
    CubeHeader { path: String, detail: String },

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Active-set solve did not converge; carries the best iterate found.
    #[error("least-squares solve did not converge{}", pixel_suffix(.pixel))]
    FclsNonConvergence {
        pixel: Option<(usize, usize)>,
        best: Vec<f64>,
    },

    /// Solver-level failure (bad penalty, non-finite state, ...).
    #[error("solver error: {0}")]
    Solver(String),

    /// Failure wrapped with the pipeline stage it happened in.
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

fn pixel_suffix(pixel: &Option<(usize, usize)>) -> String {
    match pixel {
        Some((r, c)) => format!(" at pixel ({r}, {c})"),
        None => String::new(),
    }
}

impl Error {
    /// Process exit code for the CLI: distinct classes for config, I/O and
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::Io { .. } | Error::CubePayload { .. } | Error::CubeHeader { .. } => 3,
            Error::Solver(_) | Error::FclsNonConvergence { .. } | Error::NonFinite(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }

    /// Tag an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
