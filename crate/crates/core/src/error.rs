// SPDX-License-Identifier: MIT OR Apache-2.0
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("index {index} out of range [1, {n}]")]
    OutOfRange { index: i64, n: usize },
    #[error("malformed data: {0}")]
    Format(String),
    #[error("zero noise scale estimate")]
    ZeroSigma,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
