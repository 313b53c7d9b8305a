use std::fmt;

/// A failure mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    Usage(String),
    /// Unreadable, malformed or inconsistent input or model files (exit 2).
    Data(String),
    /// Non-finite values or a failed gradient check (exit 3).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<can_ner::Error> for CliError {
    fn from(e: can_ner::Error) -> Self {
        use can_ner::numerics::NumericsError;
        use can_ner::Error;
        let msg = e.to_string();
        match e {
            Error::Config(_) => CliError::Usage(msg),
            Error::Numeric(_) | Error::Numerics(NumericsError::NonFinite(_)) => CliError::Numeric(msg),
            Error::Numerics(NumericsError::BadHyperParameter(_)) => CliError::Usage(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<can_ner::corpus::CorpusError> for CliError {
    fn from(e: can_ner::corpus::CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}
