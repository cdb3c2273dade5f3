use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no interactions")]
    EmptyLog,

    #[error("undefined Gini: {0}")]
    UndefinedGini(&'static str),

    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },

    #[error("{0}")]
    Data(String),

    #[error("insufficient history: need {needed} steps, log covers {available}")]
    InsufficientHistory { needed: u32, available: u32 },

    #[error("schedule has no entry for step {0}")]
    ScheduleGap(u32),

    #[error("empty candidate set")]
    EmptyCandidateSet,

    #[error("no evaluable users")]
    NoEvaluableUsers,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Runtime(String),
}

/// Coarse error classes, used by the command line to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::EmptyLog
            | Error::Row { .. }
            | Error::Data(_)
            | Error::InsufficientHistory { .. }
            | Error::ScheduleGap(_)
            | Error::NoEvaluableUsers
            | Error::Io { .. }
            | Error::Csv(_) => ErrorKind::Data,
            Error::UndefinedGini(_) | Error::EmptyCandidateSet | Error::Runtime(_) => {
                ErrorKind::Runtime
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
