//! Word-mapped cyclic tag exchange between the PLC and the robot
//! controller, plus the fixed discrete wiring of the cell.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::BusError;

pub const WORDS: usize = 4;

pub type Words = [u16; WORDS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    RobotToPlc,
    PlcToRobot,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::RobotToPlc, Direction::PlcToRobot];

    pub fn aliases(self) -> &'static [BitAlias] {
        match self {
            Direction::RobotToPlc => ROBOT_TO_PLC,
            Direction::PlcToRobot => PLC_TO_ROBOT,
        }
    }

    /// Tag-path prefix as seen from the PLC.
    pub fn plc_prefix(self) -> &'static str {
        match self {
            Direction::RobotToPlc => "ROBOT:I.Data",
            Direction::PlcToRobot => "ROBOT:O.Data",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::RobotToPlc => "robot_to_plc",
            Direction::PlcToRobot => "plc_to_robot",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitAlias {
    pub word: usize,
    pub bit: u8,
    pub name: &'static str,
}

const fn alias(word: usize, bit: u8, name: &'static str) -> BitAlias {
    BitAlias { word, bit, name }
}

/// Robot status and detection bits read by the PLC.
pub const ROBOT_TO_PLC: &[BitAlias] = &[
    alias(0, 1, "Cmd enabled"),
    alias(0, 2, "System ready"),
    alias(0, 3, "Prg running"),
    alias(0, 4, "Prg paused"),
    alias(0, 5, "Motion held"),
    alias(0, 6, "Fault"),
    alias(0, 7, "At perch"),
    alias(0, 8, "TP enabled"),
    alias(0, 10, "Red"),
    alias(0, 11, "Green"),
    alias(0, 12, "Blue"),
    alias(0, 13, "Conveyor fwd"),
    alias(1, 1, "Scan Done"),
    alias(1, 12, "Robot DO 141"),
];

/// Commands written by the PLC to the robot.
pub const PLC_TO_ROBOT: &[BitAlias] = &[
    alias(0, 0, "IMSTP"),
    alias(0, 1, "HOLD"),
    alias(0, 2, "SFSPD"),
    alias(0, 3, "Stop"),
    alias(0, 4, "Fault Reset"),
    alias(0, 5, "Stat"),
    alias(0, 6, "Part match"),
    alias(0, 7, "Enable"),
    alias(0, 8, "Scan Program"),
    alias(0, 9, "Remove Program"),
];

pub fn lookup(direction: Direction, name: &str) -> Result<BitAlias, BusError> {
    direction
        .aliases()
        .iter()
        .copied()
        .find(|a| a.name == name)
        .ok_or_else(|| BusError::UnknownAlias(name.to_string()))
}

/// Sets exactly the named bits; every other bit is zero.
pub fn pack(direction: Direction, set: &[&str]) -> Result<Words, BusError> {
    let mut words = [0u16; WORDS];
    for name in set {
        let a = lookup(direction, name)?;
        words[a.word] |= 1 << a.bit;
    }
    Ok(words)
}

/// Names of the aliased bits that are set, in table order. Reserved bits are
/// ignored.
pub fn unpack(direction: Direction, words: &Words) -> Vec<&'static str> {
    direction
        .aliases()
        .iter()
        .filter(|a| words[a.word] & (1 << a.bit) != 0)
        .map(|a| a.name)
        .collect()
}

/// Mask of the aliased bits for each word.
pub fn used_bits(direction: Direction) -> Words {
    let mut m = [0u16; WORDS];
    for a in direction.aliases() {
        m[a.word] |= 1 << a.bit;
    }
    m
}

/// One direction's I/O image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagAssembly {
    pub direction: Direction,
    pub words: Words,
}

impl TagAssembly {
    pub fn new(direction: Direction) -> Self {
        TagAssembly {
            direction,
            words: [0; WORDS],
        }
    }

    pub fn get(&self, name: &str) -> Result<bool, BusError> {
        let a = lookup(self.direction, name)?;
        Ok(self.words[a.word] & (1 << a.bit) != 0)
    }

    /// Reads a bit that is known to exist in the alias table.
    pub fn bit(&self, name: &str) -> bool {
        self.get(name).unwrap_or(false)
    }

    pub fn set(&mut self, name: &str, value: bool) -> Result<(), BusError> {
        let a = lookup(self.direction, name)?;
        if value {
            self.words[a.word] |= 1 << a.bit;
        } else {
            self.words[a.word] &= !(1 << a.bit);
        }
        Ok(())
    }

    pub fn decoded(&self) -> Vec<&'static str> {
        unpack(self.direction, &self.words)
    }

    pub fn view(&self) -> AssemblyView {
        AssemblyView {
            words: self.words,
            bits: self.decoded().into_iter().map(String::from).collect(),
        }
    }
}

/// Decimal words plus decoded bit names, as logged and served.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyView {
    pub words: Words,
    pub bits: Vec<String>,
}

/// Sinks driven by robot digital outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoSink {
    /// Bit in the robot-to-PLC assembly.
    Assembly(&'static str),
    /// Arduino input 1 through a relay.
    ArduinoInputA,
    /// Arduino input 2 through a relay.
    ArduinoInputB,
    Suction,
}

/// Robot DO index to sink. One sink per output.
pub const ROBOT_DO_WIRING: &[(u16, DoSink)] = &[
    (123, DoSink::Assembly("Red")),
    (124, DoSink::Assembly("Green")),
    (125, DoSink::Assembly("Blue")),
    (126, DoSink::Assembly("Conveyor fwd")),
    (130, DoSink::Assembly("Scan Done")),
    (110, DoSink::ArduinoInputA),
    (112, DoSink::ArduinoInputB),
    (111, DoSink::Suction),
];

pub fn do_sink(index: u16) -> Option<DoSink> {
    ROBOT_DO_WIRING
        .iter()
        .find(|(i, _)| *i == index)
        .map(|(_, s)| *s)
}

/// Robot DI read by the sort program's branch.
pub const REMOVE_PART_DI: u16 = 121;
/// Verdict bit that drives [`REMOVE_PART_DI`]. The sort program jumps to its
/// conveyor-pulse (keep) branch when the input is ON, so the input follows
/// the match verdict.
pub const REMOVE_PART_DI_SOURCE: &str = "Part match";

/// Inert network configuration carried for fidelity. Not used for routing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkMetadata {
    pub plc_ip: String,
    pub robot_ip: String,
    pub vision_pc_ip: String,
    pub subnet_mask: String,
}

impl Default for NetworkMetadata {
    fn default() -> Self {
        NetworkMetadata {
            plc_ip: "192.168.1.10".into(),
            robot_ip: "192.168.1.20".into(),
            vision_pc_ip: "192.168.1.30".into(),
            subnet_mask: "255.255.0.0".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BusParams {
    pub rpi_ms: u32,
    /// Fixed latency added to every delivery.
    pub extra_latency_ms: u32,
    pub network: NetworkMetadata,
}

impl Default for BusParams {
    fn default() -> Self {
        BusParams {
            rpi_ms: 10,
            extra_latency_ms: 0,
            network: NetworkMetadata::default(),
        }
    }
}

/// A snapshot handed to the consumer side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub direction: Direction,
    pub words: Words,
    pub changed: bool,
}

/// In-process implicit I/O fabric. Producers publish their images; at each
/// RPI tick a copy of each is queued and becomes the consumer's image once
/// its delivery time is reached.
#[derive(Debug, Clone)]
pub struct Bus {
    pub rpi_us: u64,
    pub extra_latency_us: u64,
    registered: [bool; 2],
    delivered: [Words; 2],
    in_flight: VecDeque<(u64, Direction, Words)>,
}

fn slot(d: Direction) -> usize {
    match d {
        Direction::RobotToPlc => 0,
        Direction::PlcToRobot => 1,
    }
}

impl Bus {
    pub fn new(rpi_us: u64, extra_latency_us: u64) -> Self {
        Bus {
            rpi_us,
            extra_latency_us,
            registered: [false; 2],
            delivered: [[0; WORDS]; 2],
            in_flight: VecDeque::new(),
        }
    }

    pub fn register(&mut self, direction: Direction) {
        self.registered[slot(direction)] = true;
    }

    /// Consumer-side image.
    pub fn delivered(&self, direction: Direction) -> TagAssembly {
        TagAssembly {
            direction,
            words: self.delivered[slot(direction)],
        }
    }

    /// Samples both producer images at tick time `now_us`. Returns the time
    /// at which these samples become visible.
    pub fn cyclic_exchange(
        &mut self,
        now_us: u64,
        robot_out: &Words,
        plc_out: &Words,
    ) -> Result<u64, BusError> {
        for d in Direction::BOTH {
            if !self.registered[slot(d)] {
                return Err(BusError::BusFault(d.to_string()));
            }
        }
        let due = now_us + self.extra_latency_us;
        self.in_flight
            .push_back((due, Direction::RobotToPlc, *robot_out));
        self.in_flight
            .push_back((due, Direction::PlcToRobot, *plc_out));
        Ok(due)
    }

    /// Applies every queued snapshot due at or before `now_us`, in order.
    pub fn deliver_due(&mut self, now_us: u64) -> Vec<Delivery> {
        let mut out = Vec::new();
        while let Some(&(due, direction, words)) = self.in_flight.front() {
            if due > now_us {
                break;
            }
            self.in_flight.pop_front();
            let prev = std::mem::replace(&mut self.delivered[slot(direction)], words);
            out.push(Delivery {
                direction,
                words,
                changed: prev != words,
            });
        }
        out
    }
}
