//! Live operator session: command intake, snapshots and event cursors.
//!
//! Transport-agnostic. The HTTP front end in the CLI wraps a [`Session`]
//! behind a mutex and serializes the messages defined here.

use serde::{Deserialize, Serialize};

use crate::color::{ColorClass, ColorFlags};
use crate::error::SimError;
use crate::iobus::AssemblyView;
use crate::sim::{ArduinoView, Command, Engine, Metrics, RobotView, Scenario, SimEvent};
use crate::workcell::Part;

pub const MESSAGE_SCHEMA_VERSION: u32 = 1;

const COMMAND_NAMES: [&str; 6] = [
    "start",
    "stop",
    "select_colors",
    "set_override",
    "spawn_part",
    "fault_reset",
];

/// Structured rejection of a command message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct CommandError {
    /// `unknown_command`, `malformed` or `invalid`.
    pub code: String,
    pub message: String,
}

impl CommandError {
    fn new(code: &str, message: impl Into<String>) -> Self {
        CommandError {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

/// Parses a command message. Unknown command names are errors.
pub fn parse_command(text: &str) -> Result<Command, CommandError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CommandError::new("malformed", e.to_string()))?;
    let name = value
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| CommandError::new("malformed", "command needs a string \"type\" field"))?;
    if !COMMAND_NAMES.contains(&name) {
        return Err(CommandError::new(
            "unknown_command",
            format!("unknown command '{name}'"),
        ));
    }
    serde_json::from_value(value).map_err(|e| CommandError::new("malformed", e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConveyorView {
    pub running: bool,
    pub speed_mm_per_s: f64,
    pub beam_blocked: bool,
}

/// Operator-facing controller tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelView {
    pub enabled: bool,
    pub selected: ColorFlags,
    pub override_enabled: bool,
    pub part_present: bool,
    pub robot_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyPair {
    pub robot_to_plc: AssemblyView,
    pub plc_to_robot: AssemblyView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    pub t_us: u64,
    /// Events emitted so far; the next event will carry this `seq`.
    pub event_count: u64,
    pub conveyor: ConveyorView,
    pub parts: Vec<Part>,
    pub assemblies: AssemblyPair,
    pub panel: PanelView,
    pub robot: RobotView,
    pub arduino: ArduinoView,
    pub bin: Vec<u32>,
    pub metrics: Metrics,
    /// Set once the engine has stopped on an error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halted: Option<String>,
}

/// One closed-loop engine driven by an operator.
pub struct Session {
    engine: Engine,
    scenario: Scenario,
    halted: Option<SimError>,
}

impl Session {
    /// Faults latch instead of ending the session.
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        let mut engine = Engine::new(&scenario)?;
        engine.latch_faults();
        Ok(Session {
            engine,
            scenario,
            halted: None,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn now_us(&self) -> u64 {
        self.engine.now_us()
    }

    pub fn halted(&self) -> Option<&SimError> {
        self.halted.as_ref()
    }

    /// Validates and queues a command; it applies at the next scan.
    pub fn submit(&mut self, command: Command) -> Result<(), CommandError> {
        if let Command::SpawnPart { color, y_offset } = &command {
            if *color == ColorClass::Unknown {
                return Err(CommandError::new(
                    "invalid",
                    "spawn_part needs red, green or blue",
                ));
            }
            let c = &self.engine.params().conveyor;
            let limit = c.half_width_mm - c.part_size_mm / 2.0;
            if !y_offset.is_finite() || y_offset.abs() > limit {
                return Err(CommandError::new(
                    "invalid",
                    format!("y_offset {y_offset} is off the belt (|y| <= {limit})"),
                ));
            }
        }
        self.engine
            .submit(command)
            .map_err(|e| CommandError::new("invalid", e.to_string()))
    }

    pub fn submit_json(&mut self, text: &str) -> Result<Command, CommandError> {
        let cmd = parse_command(text)?;
        self.submit(cmd.clone())?;
        Ok(cmd)
    }

    /// Advances simulated time. Stops for good on deadlock.
    pub fn step_until(&mut self, t_us: u64) -> Result<(), SimError> {
        if let Some(e) = &self.halted {
            return Err(e.clone());
        }
        self.engine
            .step_until(t_us)
            .inspect_err(|e| self.halted = Some(e.clone()))
    }

    pub fn advance(&mut self, dt_us: u64) -> Result<(), SimError> {
        self.step_until(self.now_us() + dt_us)
    }

    /// Events with `seq >= from`.
    pub fn events_since(&self, from: u64) -> &[SimEvent] {
        let events = self.engine.events();
        let start = events.partition_point(|e| e.seq < from);
        &events[start..]
    }

    pub fn snapshot(&self) -> Snapshot {
        let e = &self.engine;
        let (r2p, p2r) = e.assemblies().expect("sessions run the closed loop");
        let plc = e.plc().expect("sessions run the closed loop");
        let sel = |pb: &str, hmi: &str| plc.tag(pb) || plc.tag(hmi);
        Snapshot {
            schema_version: MESSAGE_SCHEMA_VERSION,
            t_us: e.now_us(),
            event_count: e.events().len() as u64,
            conveyor: ConveyorView {
                running: e.conveyor().running,
                speed_mm_per_s: e.conveyor().speed_mm_per_s,
                beam_blocked: e.beam_blocked(),
            },
            parts: e.parts(),
            assemblies: AssemblyPair {
                robot_to_plc: r2p.view(),
                plc_to_robot: p2r.view(),
            },
            panel: PanelView {
                enabled: plc.tag("Enable"),
                selected: ColorFlags::new(
                    sel("Red_Sel_PB", "HMI_Red_Sel"),
                    sel("Green_Sel_PB", "HMI_Green_Sel"),
                    sel("Blue_Sel_PB", "HMI_Blue_Sel"),
                ),
                override_enabled: plc.tag("HMI_Override"),
                part_present: plc.tag("PartPresent"),
                robot_fault: plc.try_tag("Robot_Fault").unwrap_or(false),
            },
            robot: e.robot(),
            arduino: e.arduino(),
            bin: e.reject_bin().contents().to_vec(),
            metrics: e.metrics(),
            halted: self.halted.as_ref().map(|h| h.to_string()),
        }
    }
}

/// Message pushed on the live stream: the current snapshot and every event
/// emitted since the previous message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMessage {
    pub snapshot: Snapshot,
    pub events: Vec<SimEvent>,
}

/// Reply to an accepted command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandAck {
    pub accepted: Command,
    /// Simulated time at which the command was queued; it applies at the
    /// first scan at or after this time.
    pub queued_at_us: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plc::Verdict;
    use crate::sim::EventKind;

    fn idle() -> Session {
        let mut s = Scenario::new(600.0);
        s.auto_start = false;
        Session::new(s).unwrap()
    }

    #[test]
    fn initial_snapshot_is_zeroed() {
        let s = idle();
        let snap = s.snapshot();
        assert_eq!(snap.t_us, 0);
        assert_eq!(snap.assemblies.robot_to_plc.words, [0; 4]);
        assert_eq!(snap.assemblies.plc_to_robot.words, [0; 4]);
        assert!(snap.parts.is_empty());
        assert!(!snap.conveyor.running);
    }

    #[test]
    fn parse_rejects_unknown_and_malformed() {
        assert_eq!(
            parse_command(r#"{"type":"launch"}"#).unwrap_err().code,
            "unknown_command"
        );
        assert_eq!(
            parse_command(r#"{"type":"set_override"}"#)
                .unwrap_err()
                .code,
            "malformed"
        );
        assert_eq!(parse_command("not json").unwrap_err().code, "malformed");
        assert_eq!(parse_command(r#"{"type":"stop"}"#).unwrap(), Command::Stop);
    }

    #[test]
    fn spawn_validation() {
        let mut s = idle();
        let off = Command::SpawnPart {
            color: ColorClass::Red,
            y_offset: 500.0,
        };
        assert_eq!(s.submit(off).unwrap_err().code, "invalid");
        let unknown = Command::SpawnPart {
            color: ColorClass::Unknown,
            y_offset: 0.0,
        };
        assert!(s.submit(unknown).is_err());
    }

    #[test]
    fn select_red_then_green_part_is_removed() {
        let mut s = idle();
        s.submit_json(r#"{"type":"start"}"#).unwrap();
        s.submit_json(r#"{"type":"select_colors","r":true,"g":false,"b":false}"#)
            .unwrap();
        s.submit_json(r#"{"type":"spawn_part","color":"green"}"#)
            .unwrap();
        s.step_until(15_000_000).unwrap();
        let v = s.events_since(0).iter().find_map(|e| match &e.kind {
            EventKind::VerdictIssued { verdict, .. } => Some(*verdict),
            _ => None,
        });
        assert_eq!(v, Some(Verdict::Remove));
        let snap = s.snapshot();
        assert!(snap.panel.selected.red && !snap.panel.selected.green);
    }

    #[test]
    fn stop_holds_state_and_start_resumes() {
        let mut s = idle();
        s.submit(Command::Start).unwrap();
        s.submit(Command::SpawnPart {
            color: ColorClass::Red,
            y_offset: 0.0,
        })
        .unwrap();
        s.step_until(2_000_000).unwrap();
        let x_before = s.snapshot().parts[0].position_mm.0;
        s.submit(Command::Stop).unwrap();
        s.step_until(2_050_000).unwrap();
        let held = s.snapshot();
        assert!(!held.conveyor.running && !held.panel.enabled);
        s.step_until(5_000_000).unwrap();
        let later = s.snapshot();
        assert_eq!(later.parts, held.parts);
        assert!(later.parts[0].position_mm.0 >= x_before);
        s.submit(Command::Start).unwrap();
        s.step_until(6_000_000).unwrap();
        let resumed = s.snapshot();
        assert!(resumed.conveyor.running);
        assert!(resumed.parts[0].position_mm.0 > later.parts[0].position_mm.0);
    }

    #[test]
    fn cursor_returns_only_new_events() {
        let mut s = idle();
        s.step_until(50_000).unwrap();
        let n = s.snapshot().event_count;
        s.submit(Command::Start).unwrap();
        s.step_until(100_000).unwrap();
        let fresh = s.events_since(n);
        assert!(!fresh.is_empty());
        assert!(fresh.iter().all(|e| e.seq >= n));
    }
}
