//! The shipped sorting program and the controller that runs it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ladder::{scan_once, LadderProgram, PlcMemory, TagChange, TagKind};
use crate::error::{ConfigError, LadderError};
use crate::iobus::{Direction, Words, WORDS};

/// Reconstructed sorting program as a ladder document.
pub const DEFAULT_PROGRAM_JSON: &str = include_str!("default_program.json");

pub fn default_program() -> LadderProgram {
    LadderProgram::from_json(DEFAULT_PROGRAM_JSON).expect("embedded ladder program compiles")
}

/// Where a tag is wired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binding {
    /// Local I/O module point, `Local:<slot>:<I|O>.Data.<bit>`.
    Local { slot: u8, input: bool, bit: u8 },
    /// Operator panel tag, `HMI:<name>`.
    Hmi(String),
    /// Robot assembly bit, `ROBOT:<I|O>.Data[<word>].<bit>`.
    Robot {
        direction: Direction,
        word: usize,
        bit: u8,
    },
}

pub fn parse_address(address: &str) -> Option<Binding> {
    if let Some(name) = address.strip_prefix("HMI:") {
        return (!name.is_empty()).then(|| Binding::Hmi(name.to_string()));
    }
    if let Some(rest) = address.strip_prefix("ROBOT:") {
        let (direction, rest) = if let Some(r) = rest.strip_prefix("I.Data[") {
            (Direction::RobotToPlc, r)
        } else {
            (Direction::PlcToRobot, rest.strip_prefix("O.Data[")?)
        };
        let (word, bit) = rest.split_once("].")?;
        let word: usize = word.parse().ok()?;
        let bit: u8 = bit.parse().ok()?;
        return (word < WORDS && bit < 16).then_some(Binding::Robot {
            direction,
            word,
            bit,
        });
    }
    let rest = address.strip_prefix("Local:")?;
    let (slot, rest) = rest.split_once(':')?;
    let (input, bit) = if let Some(b) = rest.strip_prefix("I.Data.") {
        (true, b)
    } else {
        (false, rest.strip_prefix("O.Data.")?)
    };
    Some(Binding::Local {
        slot: slot.parse().ok()?,
        input,
        bit: bit.parse().ok()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlcParams {
    pub scan_period_ms: u32,
}

impl Default for PlcParams {
    fn default() -> Self {
        PlcParams { scan_period_ms: 10 }
    }
}

impl PlcParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.scan_period_ms == 0 {
            return Err(ConfigError::new("plc.scan_period_ms must be positive"));
        }
        Ok(())
    }

    pub fn scan_period_us(&self) -> u64 {
        u64::from(self.scan_period_ms) * 1000
    }
}

/// Tags the cell wiring relies on. A replacement program must declare them.
pub const REQUIRED_TAGS: &[&str] = &[
    "Start_PB",
    "Stop_PB",
    "Fault_Reset_PB",
    "Beam",
    "HMI_Start",
    "HMI_Stop",
    "HMI_Red_Sel",
    "HMI_Green_Sel",
    "HMI_Blue_Sel",
    "HMI_Override",
    "Conveyor_Run",
    "Enable",
    "PartPresent",
    "Robot_Part_Match",
    "Robot_Remove_Program",
];

#[derive(Debug, Clone, Copy)]
struct RobotBit {
    slot: usize,
    word: usize,
    bit: u8,
}

/// A controller running one compiled program.
#[derive(Debug, Clone)]
pub struct Plc {
    program: Arc<LadderProgram>,
    mem: PlcMemory,
    robot_in: Vec<RobotBit>,
    robot_out: Vec<RobotBit>,
}

impl Plc {
    pub fn new(program: Arc<LadderProgram>) -> Result<Self, LadderError> {
        for name in REQUIRED_TAGS {
            if program.slot(name).is_none() {
                return Err(LadderError::UnknownTag {
                    rung: "wiring".into(),
                    tag: (*name).into(),
                });
            }
        }
        let mut robot_in = Vec::new();
        let mut robot_out = Vec::new();
        for (slot, tag) in program.tags().iter().enumerate() {
            let Some(addr) = &tag.address else { continue };
            let binding = parse_address(addr).ok_or_else(|| {
                LadderError::Document(format!("tag {}: bad address '{addr}'", tag.name))
            })?;
            if let Binding::Robot {
                direction,
                word,
                bit,
            } = binding
            {
                let rb = RobotBit { slot, word, bit };
                match (direction, tag.kind) {
                    (Direction::RobotToPlc, TagKind::Input) => robot_in.push(rb),
                    (Direction::PlcToRobot, TagKind::Output) => robot_out.push(rb),
                    _ => {
                        return Err(LadderError::Document(format!(
                            "tag {}: address direction does not match its kind",
                            tag.name
                        )))
                    }
                }
            }
        }
        let mem = PlcMemory::new(&program);
        Ok(Plc {
            program,
            mem,
            robot_in,
            robot_out,
        })
    }

    pub fn program(&self) -> &LadderProgram {
        &self.program
    }

    fn slot(&self, name: &str) -> usize {
        self.program
            .slot(name)
            .unwrap_or_else(|| panic!("tag {name} missing from program"))
    }

    /// Current value of a tag after the last scan.
    pub fn tag(&self, name: &str) -> bool {
        self.mem.get(self.slot(name))
    }

    pub fn try_tag(&self, name: &str) -> Option<bool> {
        self.program.slot(name).map(|s| self.mem.get(s))
    }

    pub fn tag_name(&self, slot: usize) -> &str {
        &self.program.tags()[slot].name
    }

    /// Stages an input for the next scan.
    pub fn set_input(&mut self, name: &str, value: bool) {
        let slot = self.slot(name);
        self.mem.set_input(&self.program, slot, value);
    }

    pub fn staged_input(&self, name: &str) -> bool {
        self.mem.input(self.slot(name))
    }

    /// Copies the delivered robot assembly into the input image.
    pub fn apply_robot_words(&mut self, words: &Words) {
        for rb in &self.robot_in {
            let v = words[rb.word] & (1 << rb.bit) != 0;
            self.mem.set_input(&self.program, rb.slot, v);
        }
    }

    /// The PLC-to-robot assembly as produced by the last scan.
    pub fn output_words(&self) -> Words {
        let mut w = [0u16; WORDS];
        for rb in &self.robot_out {
            if self.mem.get(rb.slot) {
                w[rb.word] |= 1 << rb.bit;
            }
        }
        w
    }

    pub fn scan(&mut self, period_us: u64) -> Vec<TagChange> {
        scan_once(&self.program, &mut self.mem, period_us)
    }

    pub fn memory(&self) -> &PlcMemory {
        &self.mem
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn addresses() {
        assert_eq!(
            parse_address("Local:1:I.Data.14"),
            Some(Binding::Local {
                slot: 1,
                input: true,
                bit: 14
            })
        );
        assert_eq!(
            parse_address("ROBOT:O.Data[0].9"),
            Some(Binding::Robot {
                direction: Direction::PlcToRobot,
                word: 0,
                bit: 9
            })
        );
        assert_eq!(
            parse_address("HMI:Start"),
            Some(Binding::Hmi("Start".into()))
        );
        assert_eq!(parse_address("ROBOT:I.Data[4].1"), None);
        assert_eq!(parse_address("Local:1:X.Data.1"), None);
    }

    #[test]
    fn default_program_shape() {
        let p = default_program();
        assert_eq!(p.rung_count(), 14);
        assert_eq!(p.timer_names(), ["T2", "T1"]);
    }

    fn plc() -> Plc {
        Plc::new(Arc::new(default_program())).unwrap()
    }

    #[test]
    fn quiescent_outputs_hold_constants_only() {
        let mut p = plc();
        p.scan(10_000);
        assert!(!p.tag("Enable") && !p.tag("Conveyor_Run"));
        assert_eq!(p.output_words()[0], 1 + 4 + 8);
    }

    #[test]
    fn start_seals_in_and_stop_pauses() {
        let mut p = plc();
        p.set_input("Start_PB", true);
        p.scan(10_000);
        p.set_input("Start_PB", false);
        p.scan(10_000);
        assert!(p.tag("Enable") && p.tag("Conveyor_Run"));
        assert_eq!(p.output_words()[0], 141);
        p.set_input("Stop_PB", true);
        p.scan(10_000);
        assert!(!p.tag("Enable") && !p.tag("Conveyor_Run"));
        p.set_input("Stop_PB", false);
        p.set_input("HMI_Start", true);
        p.scan(10_000);
        assert!(p.tag("Enable") && p.tag("Conveyor_Run"));
    }

    #[test]
    fn fault_reset_pulse_lasts_half_a_second() {
        let mut p = plc();
        p.set_input("Fault_Reset_PB", true);
        let mut on = 0;
        for _ in 0..100 {
            p.scan(10_000);
            if p.tag("Robot_Fault_Reset") {
                on += 1;
            }
        }
        assert_eq!(on, 50);
    }
}
