use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A register reference with its optional comment, as in `PR[80:VISION REF]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegRef {
    pub index: u16,
    pub comment: Option<String>,
}

impl RegRef {
    pub fn new(index: u16) -> Self {
        RegRef {
            index,
            comment: None,
        }
    }

    pub fn with_comment(index: u16, comment: &str) -> Self {
        RegRef {
            index,
            comment: Some(comment.to_string()),
        }
    }
}

impl fmt::Display for RegRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.comment {
            Some(c) => write!(f, "[{}:{}]", self.index, c),
            None => write!(f, "[{}]", self.index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// Program-local position `P[n]`.
    P(u16),
    /// Position register `PR[n]`.
    Pr(RegRef),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::P(n) => write!(f, "P[{n}]"),
            Target::Pr(r) => write!(f, "PR{r}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Fine,
    Cnt(u8),
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Fine => f.write_str("FINE"),
            Termination::Cnt(n) => write!(f, "CNT{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TpStatement {
    SetDo {
        index: u16,
        label: Option<String>,
        value: bool,
    },
    Wait {
        seconds: f64,
    },
    VisionRunFind {
        process: String,
    },
    /// Loads the process offset into `VR[vr_index]`, or jumps to
    /// `LBL[jump_label]` when nothing was found.
    VisionGetOffset {
        process: String,
        vr_index: u16,
        jump_label: u16,
    },
    Label {
        n: u16,
    },
    Jump {
        n: u16,
    },
    IfDiJump {
        di: RegRef,
        value: bool,
        jump_label: u16,
    },
    SetUFrame {
        n: u8,
    },
    SetUTool {
        n: u8,
    },
    MotionJoint {
        target: Target,
        speed_pct: f64,
        term: Termination,
    },
    MotionLinear {
        target: Target,
        speed_mm_s: f64,
        term: Termination,
        voffset_vr: Option<u16>,
        offset_pr: Option<RegRef>,
    },
}

fn on_off(v: bool) -> &'static str {
    if v {
        "ON"
    } else {
        "OFF"
    }
}

impl fmt::Display for TpStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TpStatement::SetDo {
                index,
                label,
                value,
            } => {
                let r = RegRef {
                    index: *index,
                    comment: label.clone(),
                };
                write!(f, "DO{r}={}", on_off(*value))
            }
            TpStatement::Wait { seconds } => write!(f, "WAIT {seconds}(sec)"),
            TpStatement::VisionRunFind { process } => write!(f, "VISION RUN_FIND '{process}'"),
            TpStatement::VisionGetOffset {
                process,
                vr_index,
                jump_label,
            } => write!(
                f,
                "VISION GET_OFFSET '{process}' VR[{vr_index}] JMP LBL[{jump_label}]"
            ),
            TpStatement::Label { n } => write!(f, "LBL[{n}]"),
            TpStatement::Jump { n } => write!(f, "JMP LBL[{n}]"),
            TpStatement::IfDiJump {
                di,
                value,
                jump_label,
            } => write!(f, "IF DI{di}={}, JMP LBL[{jump_label}]", on_off(*value)),
            TpStatement::SetUFrame { n } => write!(f, "UFRAME_NUM={n}"),
            TpStatement::SetUTool { n } => write!(f, "UTOOL_NUM={n}"),
            TpStatement::MotionJoint {
                target,
                speed_pct,
                term,
            } => write!(f, "J {target} {speed_pct}% {term}"),
            TpStatement::MotionLinear {
                target,
                speed_mm_s,
                term,
                voffset_vr,
                offset_pr,
            } => {
                write!(f, "L {target} {speed_mm_s}mm/sec {term}")?;
                if let Some(vr) = voffset_vr {
                    write!(f, " VOFFSET,VR[{vr}]")?;
                }
                if let Some(pr) = offset_pr {
                    write!(f, " Offset,PR{pr}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpProgram {
    pub name: String,
    pub statements: Vec<TpStatement>,
    /// Label number to the index of its `LBL` statement.
    pub label_index: BTreeMap<u16, usize>,
}

impl TpProgram {
    pub fn label(&self, n: u16) -> Option<usize> {
        self.label_index.get(&n).copied()
    }
}

/// Normalized listing: one numbered statement per line, continuation
/// modifiers folded in, terminated by ` ;`.
impl fmt::Display for TpProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "/PROG {}", self.name)?;
        for (i, s) in self.statements.iter().enumerate() {
            writeln!(f, "{:>4}:  {s} ;", i + 1)?;
        }
        writeln!(f, "/END")
    }
}
