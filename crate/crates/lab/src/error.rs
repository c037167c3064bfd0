use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("{count} run(s) did not converge")]
    NonConverged { count: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    /// Process exit code: 1 for bad configuration, 2 for anything that went
    /// wrong while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 1,
            _ => 2,
        }
    }
}

impl From<splinelens_core::Error> for LabError {
    fn from(e: splinelens_core::Error) -> Self {
        LabError::Runtime(e.to_string())
    }
}

pub type LabResult<T> = std::result::Result<T, LabError>;
