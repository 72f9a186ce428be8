// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("token {token} at position {position} outside vocabulary of {vocab}")]
    Token {
        token: usize,
        position: usize,
        vocab: usize,
    },

    #[error("invalid perturbation: {0}")]
    Perturbation(String),

    #[error("row {row} sums to {sum}, not 1")]
    NotStochastic { row: usize, sum: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad trace: {0}")]
    Trace(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
