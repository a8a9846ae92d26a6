//! Failure kinds and their process exit codes.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | configuration or usage error |
//! | 3 | missing input or upstream artifact |
//! | 4 | malformed or inconsistent data |
//! | 5 | numeric failure during training or decoding |

use std::fmt;
use std::path::Path;

use wuyun_core::error::{EvalError, PreprocessError, ScoreError, SkeletonError, TokenError};
use wuyun_neuro::NeuroError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    MissingArtifact,
    Data,
    Numeric,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::MissingArtifact => 3,
            Kind::Data => 4,
            Kind::Numeric => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn config(message: impl Into<String>) -> CliError {
    CliError { kind: Kind::Config, message: message.into() }
}

pub fn missing(message: impl Into<String>) -> CliError {
    CliError { kind: Kind::MissingArtifact, message: message.into() }
}

pub fn data(message: impl Into<String>) -> CliError {
    CliError { kind: Kind::Data, message: message.into() }
}

/// Attach `path` to a data error.
pub fn at<E: fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
    move |e| data(format!("{}: {e}", path.display()))
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        let kind = if e.kind() == std::io::ErrorKind::NotFound { Kind::MissingArtifact } else { Kind::Data };
        CliError { kind, message: e.to_string() }
    }
}

impl From<NeuroError> for CliError {
    fn from(e: NeuroError) -> Self {
        let kind = match e {
            NeuroError::NonFiniteLoss { .. } | NeuroError::GrammarDeadlock(_) => Kind::Numeric,
            NeuroError::InvalidConfig(_) => Kind::Config,
            _ => Kind::Data,
        };
        CliError { kind, message: e.to_string() }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                data(e.to_string())
            }
        }
    )*};
}

data_errors!(ScoreError, PreprocessError, TokenError, EvalError, csv::Error, serde_json::Error);

impl From<SkeletonError> for CliError {
    fn from(e: SkeletonError) -> Self {
        match e {
            SkeletonError::MaskLength { .. } => data(e.to_string()),
            _ => config(e.to_string()),
        }
    }
}
