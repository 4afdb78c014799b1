use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failure of a CLI command, carrying its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid value for {name}: {detail}")]
    Param { name: &'static str, detail: String },
    #[error("missing required parameter {0} (pass it as a flag or in the config file)")]
    Missing(&'static str),
    #[error("cannot write {path}: {detail}")]
    Write { path: PathBuf, detail: String },
    #[error(transparent)]
    Model(#[from] youla_lqg::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        use youla_lqg::Error as E;
        match self {
            CliError::Model(E::Dimension { .. } | E::Invalid(_) | E::NotStabilizing(_) | E::Unstable(_)) => 2,
            CliError::Model(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn param(name: &'static str, detail: impl Into<String>) -> Self {
        CliError::Param {
            name,
            detail: detail.into(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
