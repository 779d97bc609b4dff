//! Cell controller: ladder interpreter, the shipped program and the verdict rule.

pub mod ladder;
mod program;
mod verdict;

pub use ladder::{LadderDocument, LadderProgram, PlcMemory, TagChange, TagDef, TagKind};
pub use program::{
    default_program, parse_address, Binding, Plc, PlcParams, DEFAULT_PROGRAM_JSON, REQUIRED_TAGS,
};
pub use verdict::{effective_detection, verdict, Verdict};
