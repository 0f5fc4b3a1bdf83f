use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A sampled Young's modulus left the admissible range.
    #[error("model violation: non-positive Young's modulus {value} at ({x}, {y})")]
    ModelViolation { value: f64, x: f64, y: f64 },

    #[error("linear solver failed after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("sample {index} failed: {reason}")]
    Sample { index: usize, reason: String },

    #[error("degenerate posterior: normalising constant estimate {z:e} is below 1e-300")]
    DegeneratePosterior { z: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
