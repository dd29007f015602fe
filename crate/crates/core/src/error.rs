use thiserror::Error;

/// Errors raised by the footid library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("walk too short: {0}")]
    EmptyWalk(String),

    #[error("coefficient vector is empty")]
    EmptyCode,

    #[error("malformed datagram: {0}")]
    MalformedDatagram(String),

    #[error("corrupt event: {0}")]
    CorruptEvent(String),

    #[error("encoding overflow: {0}")]
    EncodingOverflow(String),

    #[error("degenerate event: {0}")]
    DegenerateEvent(String),

    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
