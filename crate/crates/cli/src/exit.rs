use std::path::{Path, PathBuf};

use colorsort_core::{ScenarioError, SimError, TraceError};

/// Process exit codes. 2 is left to clap for usage errors.
pub mod code {
    pub const OK: u8 = 0;
    pub const IO: u8 = 3;
    pub const PARSE: u8 = 4;
    pub const INVALID: u8 = 5;
    pub const DEADLOCK: u8 = 6;
    pub const ROBOT_FAULT: u8 = 7;
    pub const DIVERGED: u8 = 8;
    pub const HEADER_MISMATCH: u8 = 9;
}

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Deadlock(String),
    #[error("{0}")]
    RobotFault(String),
    #[error("traces diverge")]
    Diverged,
    #[error("{0}")]
    HeaderMismatch(String),
    #[error("{0}")]
    Service(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Io { .. } | Failure::Service(_) => code::IO,
            Failure::Parse { .. } => code::PARSE,
            Failure::Invalid(_) => code::INVALID,
            Failure::Deadlock(_) => code::DEADLOCK,
            Failure::RobotFault(_) => code::ROBOT_FAULT,
            Failure::Diverged => code::DIVERGED,
            Failure::HeaderMismatch(_) => code::HEADER_MISMATCH,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Failure::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn scenario(path: &Path, e: ScenarioError) -> Self {
        match e {
            ScenarioError::Parse(message) => Failure::Parse {
                path: path.to_path_buf(),
                message,
            },
            ScenarioError::Invalid(c) => Failure::Invalid(format!("{}: {c}", path.display())),
        }
    }

    pub fn trace(path: &Path, e: TraceError) -> Self {
        match e {
            TraceError::Io(source) => Failure::io(path, source),
            TraceError::Parse { .. } => Failure::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            },
            TraceError::HeaderMismatch(d) => {
                Failure::HeaderMismatch(format!("trace headers differ: {d}"))
            }
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ScenarioInvalid(_) => Failure::Invalid(e.to_string()),
            SimError::DeadlockDetected { .. } => Failure::Deadlock(e.to_string()),
            SimError::RobotFault(_) => Failure::RobotFault(e.to_string()),
        }
    }
}
