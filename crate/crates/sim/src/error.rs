use std::path::PathBuf;

/// Failures surfaced by the command line, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: membrane_core::Error,
    },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::Config { path: path.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config { .. } => 1,
            SimError::Solver { .. } => 2,
            SimError::Io { .. } => 3,
        }
    }
}

pub type SimResult<T> = Result<T, SimError>;

/// Attaches run context to solver errors.
pub trait SolverContext<T> {
    fn context(self, what: &str) -> SimResult<T>;
}

impl<T> SolverContext<T> for membrane_core::Result<T> {
    fn context(self, what: &str) -> SimResult<T> {
        self.map_err(|source| SimError::Solver { context: what.to_string(), source })
    }
}
