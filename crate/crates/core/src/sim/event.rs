use std::fmt;

use serde::{Deserialize, Serialize};

use super::command::Command;
use crate::color::{ColorClass, ColorFlags};
use crate::iobus::Words;
use crate::plc::Verdict;
use crate::tp::Pose;
use crate::workcell::PartState;

/// Event sources, in their tie-break order at equal times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Bus,
    Plc,
    Robot,
    Arduino,
    Workcell,
    Operator,
}

impl Node {
    pub fn priority(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Node::Bus => "bus",
            Node::Plc => "plc",
            Node::Robot => "robot",
            Node::Arduino => "arduino",
            Node::Workcell => "workcell",
            Node::Operator => "operator",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TagValue {
    Bool(bool),
    Number(f64),
    Assembly { words: Words, bits: Vec<String> },
    Rgb8([u8; 3]),
}

impl fmt::Display for TagValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TagValue::Bool(b) => write!(f, "{}", if *b { "ON" } else { "OFF" }),
            TagValue::Number(n) => write!(f, "{n}"),
            TagValue::Assembly { words, bits } => write!(f, "{words:?} {bits:?}"),
            TagValue::Rgb8(c) => write!(f, "{c:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventKind {
    TagChange {
        tag: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prev: Option<TagValue>,
        value: TagValue,
    },
    PartSpawn {
        part: u32,
        color: ColorClass,
        x_mm: f64,
        y_mm: f64,
        rz_deg: f64,
    },
    PartState {
        part: u32,
        state: PartState,
        x_mm: f64,
        y_mm: f64,
    },
    BeamEdge {
        blocked: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        part: Option<u32>,
    },
    ProgramStart {
        program: String,
    },
    ProgramEnd {
        program: String,
    },
    Statement {
        program: String,
        index: usize,
        text: String,
    },
    VisionResult {
        process: String,
        found: bool,
        x_mm: f64,
        y_mm: f64,
        rz_deg: f64,
    },
    MotionStart {
        target: Pose,
        duration_us: u64,
    },
    MotionEnd {
        pose: Pose,
    },
    VerdictIssued {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        part: Option<u32>,
        detected: ColorFlags,
        selected: ColorFlags,
        override_enabled: bool,
        verdict: Verdict,
    },
    Operator {
        command: Command,
    },
    RobotFault {
        message: String,
    },
    FaultCleared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub seq: u64,
    pub t_us: u64,
    pub source: Node,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl SimEvent {
    pub fn time_s(&self) -> f64 {
        self.t_us as f64 / 1e6
    }
}

impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>10.6} #{:<6} {:<8} ",
            self.time_s(),
            self.seq,
            self.source.to_string()
        )?;
        match &self.kind {
            EventKind::TagChange { tag, prev, value } => match prev {
                Some(p) => write!(f, "{tag} {p} -> {value}"),
                None => write!(f, "{tag} = {value}"),
            },
            EventKind::PartSpawn {
                part, color, y_mm, ..
            } => {
                write!(f, "spawn part {part} {} y={y_mm}", color.letter())
            }
            EventKind::PartState { part, state, .. } => write!(f, "part {part} {state:?}"),
            EventKind::BeamEdge { blocked, part } => {
                write!(f, "beam blocked={blocked} part={part:?}")
            }
            EventKind::ProgramStart { program } => write!(f, "start {program}"),
            EventKind::ProgramEnd { program } => write!(f, "end {program}"),
            EventKind::Statement {
                program,
                index,
                text,
            } => write!(f, "{program}:{} {text}", index + 1),
            EventKind::VisionResult {
                process,
                found,
                x_mm,
                y_mm,
                rz_deg,
            } => write!(
                f,
                "{process} found={found} ({x_mm:.2}, {y_mm:.2}, {rz_deg:.2})"
            ),
            EventKind::MotionStart {
                target,
                duration_us,
            } => {
                write!(f, "move to {target} in {:.3}s", *duration_us as f64 / 1e6)
            }
            EventKind::MotionEnd { pose } => write!(f, "at {pose}"),
            EventKind::VerdictIssued {
                part,
                detected,
                selected,
                verdict,
                ..
            } => write!(
                f,
                "verdict part={part:?} detected={detected} selected={selected} -> {verdict:?}"
            ),
            EventKind::Operator { command } => write!(f, "operator {}", command.name()),
            EventKind::RobotFault { message } => write!(f, "FAULT {message}"),
            EventKind::FaultCleared => write!(f, "fault cleared"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let evs = vec![
            SimEvent {
                seq: 0,
                t_us: 10_000,
                source: Node::Bus,
                kind: EventKind::TagChange {
                    tag: "ROBOT:I.Data".into(),
                    prev: None,
                    value: TagValue::Assembly {
                        words: [48, 0, 0, 0],
                        bits: vec!["Prg paused".into(), "Motion held".into()],
                    },
                },
            },
            SimEvent {
                seq: 1,
                t_us: 10_000,
                source: Node::Robot,
                kind: EventKind::TagChange {
                    tag: "DO[123]".into(),
                    prev: Some(TagValue::Bool(false)),
                    value: TagValue::Bool(true),
                },
            },
            SimEvent {
                seq: 2,
                t_us: 20_000,
                source: Node::Arduino,
                kind: EventKind::TagChange {
                    tag: "led_rgb".into(),
                    prev: None,
                    value: TagValue::Rgb8([0, 255, 0]),
                },
            },
            SimEvent {
                seq: 3,
                t_us: 20_000,
                source: Node::Arduino,
                kind: EventKind::TagChange {
                    tag: "servo_angle".into(),
                    prev: None,
                    value: TagValue::Number(180.0),
                },
            },
            SimEvent {
                seq: 4,
                t_us: 30_000,
                source: Node::Workcell,
                kind: EventKind::BeamEdge {
                    blocked: true,
                    part: Some(1),
                },
            },
            SimEvent {
                seq: 5,
                t_us: 30_000,
                source: Node::Robot,
                kind: EventKind::FaultCleared,
            },
        ];
        for e in evs {
            let line = serde_json::to_string(&e).unwrap();
            let back: SimEvent = serde_json::from_str(&line).unwrap();
            assert_eq!(back, e, "{line}");
        }
    }
}
