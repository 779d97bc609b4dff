//! Closed-loop simulation of the cell.

mod command;
mod engine;
mod event;
mod metrics;
mod params;
mod scenario;

pub use command::Command;
pub use engine::{run, scan_cycle_sequence, ArduinoView, Engine, RobotPhase, RobotView, RunOutput};
pub use event::{EventKind, Node, SimEvent, TagValue};
pub use metrics::{ColorCounts, Metrics};
pub use params::{CellParams, EngineParams, RejectBinParams, VisionParams, SCAN_TRAVEL_BUDGET};
pub use scenario::{
    secs_to_us, OperatorAction, PartSpec, Scenario, ScheduledPart, SpawnerSpec,
    SCENARIO_SCHEMA_VERSION,
};
