use std::fmt;

use thiserror::Error;

/// A parameter or scenario value failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VisionError {
    #[error("camera obstructed: filter wheel still moving ({actual_deg:.1} deg, commanded {commanded_deg} deg)")]
    CameraObstructed { actual_deg: f64, commanded_deg: f64 },
    #[error("ambiguous scene: {count} regions tie at area {area_px} px")]
    AmbiguousScene { count: usize, area_px: usize },
    #[error("image is {got_w}x{got_h}, camera expects {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

/// Robot program text could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line_no}: {reason}")]
pub struct ParseError {
    pub line_no: usize,
    pub reason: String,
}

impl ParseError {
    pub fn new(line_no: usize, reason: impl Into<String>) -> Self {
        ParseError {
            line_no,
            reason: reason.into(),
        }
    }
}

/// Why a robot statement could not complete.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaultCause {
    #[error("{0} holds no value")]
    MissingRegister(String),
    #[error("label LBL[{0}] does not exist")]
    UnknownLabel(u16),
    #[error("vision process '{0}' has not been run")]
    VisionNotRun(String),
    #[error("unknown vision process '{0}'")]
    UnknownProcess(String),
    #[error("target {0} is outside the robot workspace")]
    OutsideWorkspace(String),
    #[error("part dropped outside the reject bin at ({x:.1}, {y:.1})")]
    DropOutsideBin { x: f64, y: f64 },
    #[error(transparent)]
    Vision(#[from] VisionError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{program} statement {statement}: {cause}")]
pub struct RuntimeFault {
    pub program: String,
    pub statement: usize,
    pub cause: FaultCause,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("unknown bit alias '{0}'")]
    UnknownAlias(String),
    #[error("bus endpoint '{0}' is not registered")]
    BusFault(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LadderError {
    #[error("rung {rung}: unknown tag '{tag}'")]
    UnknownTag { rung: String, tag: String },
    #[error("tag '{tag}' is energized by rungs {first} and {second}")]
    DuplicateCoil {
        tag: String,
        first: String,
        second: String,
    },
    #[error("rung {rung}: tag '{tag}' is an input and cannot be written")]
    WritesInput { rung: String, tag: String },
    #[error("duplicate tag '{0}'")]
    DuplicateTag(String),
    #[error("malformed ladder document: {0}")]
    Document(String),
}

/// Fatal outcomes of a simulation run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("scenario invalid: {0}")]
    ScenarioInvalid(#[from] ConfigError),
    #[error("deadlock detected at t={time_s:.3}s: {reason}")]
    DeadlockDetected { time_s: f64, reason: String },
    #[error("robot fault: {0}")]
    RobotFault(#[from] RuntimeFault),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario invalid: {0}")]
    Invalid(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace headers differ: {0}")]
    HeaderMismatch(HeaderDiff),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderDiff {
    pub field: &'static str,
    pub left: String,
    pub right: String,
}

impl fmt::Display for HeaderDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} != {}", self.field, self.left, self.right)
    }
}
