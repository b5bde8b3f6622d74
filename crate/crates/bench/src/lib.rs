//! Experiment orchestration for the Schwarz solver family: configuration,
//! reference-solution caching, trace emission, and the scalability tables.

pub mod config;
pub mod experiment;
pub mod reference;
pub mod table;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] schwarz_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("reference cache mismatch: file has fingerprint {found}, expected {expected}")]
    CacheMismatch { expected: String, found: String },

    #[error("malformed reference file: {0}")]
    BadReference(String),
}

pub type Result<T> = std::result::Result<T, Error>;
