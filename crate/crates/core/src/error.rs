use crate::corpus::CorpusError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("empty sentence")]
    EmptySentence,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("label index {0} out of range")]
    InvalidLabel(usize),
    #[error("label `{0}` is not in the model's label set")]
    UnknownLabel(String),
    #[error("sentence {0} has no gold tags")]
    Unlabeled(usize),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("this model variant ({0}) has no attention layers")]
    NoAttention(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("inconsistent checkpoint: {0}")]
    InconsistentCheckpoint(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
