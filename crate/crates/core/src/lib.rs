//! Deterministic digital twin of a conveyor color-sorting workcell.

// Parameter checks are written `!(x > 0.0)` so NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arduino;
pub mod color;
pub mod error;
pub mod iobus;
pub mod optics;
pub mod plc;
pub mod service;
pub mod sim;
pub mod tp;
pub mod trace;
pub mod vision;
pub mod workcell;

pub use color::{Channel, ColorClass, ColorFlags, Rgb};
pub use error::{ConfigError, FaultCause, RuntimeFault, ScenarioError, SimError, TraceError};
pub use service::{Session, Snapshot};
pub use sim::{run, Command, Engine, Metrics, Scenario, SimEvent};
pub use trace::{compare_traces, TraceFile};
