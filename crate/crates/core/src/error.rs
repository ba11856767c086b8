// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// Malformed or invariant-violating input.
    #[error("invalid input: {0}")]
    Input(String),
    /// Well-formed input outside the supported class.
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("point does not lie on the requested fiber: {0}")]
    WrongFiber(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
