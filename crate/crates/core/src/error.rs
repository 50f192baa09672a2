use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CarlError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite state at atom {atom} ({field})")]
    NonFinite { atom: usize, field: &'static str },

    #[error("non-finite value in probe field")]
    NonFiniteProbe,

    #[error("integration step failed at RK4 stage {stage}: {source}")]
    StageFailed {
        stage: usize,
        #[source]
        source: Box<CarlError>,
    },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = CarlError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> CarlError {
    CarlError::InvalidParameter(msg.into())
}
