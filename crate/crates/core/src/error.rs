use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("event log is empty")]
    EmptyLog,

    #[error("invalid split: {0}")]
    Split(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{0}: every position is masked")]
    FullyMasked(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("backward called on a tape with no recorded forward pass")]
    EmptyTape,

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("negative sampling found only {found} of {needed} absent pairs after {attempts} attempts")]
    NegativeSampling {
        found: usize,
        needed: usize,
        attempts: usize,
    },

    #[error("training diverged in epoch {epoch}: non-finite loss or gradient")]
    Diverged {
        epoch: usize,
        /// Parameters at the start of the failing epoch.
        last_good: Box<crate::model::Model>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
