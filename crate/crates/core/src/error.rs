use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("value out of range: {0}")]
    OutOfRange(String),
}

pub type Result<T> = core::result::Result<T, Error>;
