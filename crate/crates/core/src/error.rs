use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spatial dimension {0} is not supported (only 1 and 2)")]
    Dimension(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("boundary specification does not fit the field: {0}")]
    BoundaryKind(String),

    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration syntax error at line {line}, column {column}: {message}")]
    ConfigSyntax { line: usize, column: usize, message: String },

    #[error("hypotheses violated: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Hypotheses(Vec<crate::scenario::Violation>),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
