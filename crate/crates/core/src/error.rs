use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("lp file line {line}: {msg}")]
    LpParse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Domain errors are reported with exit code 1, everything else as
    /// usage/configuration problems.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::Contract(_) | Error::Shape(_) | Error::Checkpoint(_) | Error::LpParse { .. }
        )
    }
}
