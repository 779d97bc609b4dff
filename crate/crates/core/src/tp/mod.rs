//! Robot program dialect: parser, normalized printer and interpreter.

mod ast;
mod interp;
mod parse;

pub use ast::{RegRef, Target, Termination, TpProgram, TpStatement};
pub use interp::{execute, Clock, Interpreter, Pose, Registers, RobotEnv, RobotParams, Step};
pub use parse::{parse, parse_statement, PR_COUNT, VR_COUNT};

/// Scan program: red, green and blue phases, then SCAN COMPLETE.
pub const SCANPART_SOURCE: &str = include_str!("corpus/scanpart.ls");
/// Sort program: pick to the reject bin, or pulse the conveyor past the beam.
pub const SORTPART_SOURCE: &str = include_str!("corpus/sortpart.ls");

pub fn scanpart() -> TpProgram {
    parse(SCANPART_SOURCE).expect("embedded SCANPART parses")
}

pub fn sortpart() -> TpProgram {
    parse(SORTPART_SOURCE).expect("embedded SORTPART parses")
}
