use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument left the set on which the operation is defined
    /// (damage outside [0,1], time outside [0,T], wrong Dirichlet trace).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("linear system is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("damage solver `{solver}` did not converge in {iterations} iterations (residual {residual:e})")]
    SolverNonConvergence {
        solver: String,
        iterations: usize,
        residual: f64,
    },

    #[error("step {step}: {message}")]
    Step { step: usize, message: String },

    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("refinement level {level} failed: {source}")]
    LevelFailed {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed trajectory file {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
