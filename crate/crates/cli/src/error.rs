use std::path::PathBuf;

use bpre_core::LabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: LabError,
    },

    #[error("cannot encode {what}: {message}")]
    Encode { what: &'static str, message: String },

    #[error("worker pool: {0}")]
    Workers(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn config_err<T>(path: impl Into<String>, message: impl Into<String>) -> Result<T> {
    Err(CliError::Config {
        path: path.into(),
        message: message.into(),
    })
}
