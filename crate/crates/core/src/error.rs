use std::path::PathBuf;

/// Errors raised across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("incomplete sample: no transition for state {state}, action {action}")]
    IncompleteSample { state: usize, action: usize },

    #[error("bimatrix solver failure: {0}")]
    SolverFailure(String),

    #[error("episode complete: cannot step past t = {0}")]
    EpisodeComplete(usize),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("undefined Sharpe ratio: sample standard deviation is zero")]
    UndefinedSharpe,

    #[error("incomplete tournament: missing results for profile {0}")]
    IncompleteTournament(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("load error at line {line}: {message}")]
    Load { line: usize, message: String },

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
