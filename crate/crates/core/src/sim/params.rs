use serde::{Deserialize, Serialize};

use crate::arduino::ArduinoConfig;
use crate::error::ConfigError;
use crate::iobus::BusParams;
use crate::optics::OpticsParams;
use crate::plc::PlcParams;
use crate::tp::RobotParams;
use crate::vision::{CameraConfig, VisionProcess};
use crate::workcell::ConveyorParams;

/// The three contrast-find processes the scan program calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisionParams {
    #[serde(rename = "REDSCAN")]
    pub redscan: VisionProcess,
    #[serde(rename = "GRNSCAN")]
    pub grnscan: VisionProcess,
    #[serde(rename = "BLUSCAN")]
    pub bluscan: VisionProcess,
}

impl Default for VisionParams {
    fn default() -> Self {
        VisionParams {
            redscan: VisionProcess::named("REDSCAN"),
            grnscan: VisionProcess::named("GRNSCAN"),
            bluscan: VisionProcess::named("BLUSCAN"),
        }
    }
}

impl VisionParams {
    pub fn process(&self, name: &str) -> Option<VisionProcess> {
        let p = match name {
            "REDSCAN" => &self.redscan,
            "GRNSCAN" => &self.grnscan,
            "BLUSCAN" => &self.bluscan,
            _ => return None,
        };
        Some(VisionProcess {
            name: name.to_string(),
            ..p.clone()
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for n in ["REDSCAN", "GRNSCAN", "BLUSCAN"] {
            self.process(n).expect("known process").validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RejectBinParams {
    pub x_mm: f64,
    pub y_mm: f64,
    pub radius_mm: f64,
}

impl Default for RejectBinParams {
    fn default() -> Self {
        RejectBinParams {
            x_mm: 580.0,
            y_mm: 300.0,
            radius_mm: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineParams {
    /// Simulated seconds without progress, while enabled with parts in the
    /// cell, before the run is declared deadlocked.
    pub stall_timeout_s: f64,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            stall_timeout_s: 30.0,
        }
    }
}

/// Every tunable of the cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellParams {
    pub conveyor: ConveyorParams,
    pub optics: OpticsParams,
    pub camera: CameraConfig,
    pub vision: VisionParams,
    pub arduino: ArduinoConfig,
    pub robot: RobotParams,
    pub plc: PlcParams,
    pub bus: BusParams,
    pub reject_bin: RejectBinParams,
    pub engine: EngineParams,
}

/// Filter travel the scan program's waits must cover: (degrees, wait s).
/// Green follows red (90 deg in 0.5 s); blue follows green through the red
/// position (180 deg in 0.8 s); red follows blue at the next scan.
pub const SCAN_TRAVEL_BUDGET: [(f64, f64); 3] = [(90.0, 0.5), (90.0, 0.5), (180.0, 0.8)];

impl CellParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.conveyor.validate()?;
        self.optics.validate()?;
        self.camera.validate()?;
        self.vision.validate()?;
        self.arduino.validate()?;
        self.robot.validate()?;
        self.plc.validate()?;
        if self.bus.rpi_ms == 0 {
            return Err(ConfigError::new("bus.rpi_ms must be positive"));
        }
        if !(self.reject_bin.radius_mm > 0.0) {
            return Err(ConfigError::new("reject_bin.radius_mm must be positive"));
        }
        if !(self.engine.stall_timeout_s > 0.0) {
            return Err(ConfigError::new("engine.stall_timeout_s must be positive"));
        }
        let need = SCAN_TRAVEL_BUDGET
            .iter()
            .map(|(deg, wait)| deg / wait)
            .fold(0.0, f64::max);
        if self.arduino.servo_travel_deg_per_s < need {
            return Err(ConfigError::new(format!(
                "arduino.servo_travel_deg_per_s {} is too slow: the scan waits need at least {need} deg/s",
                self.arduino.servo_travel_deg_per_s
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        CellParams::default().validate().unwrap();
    }

    #[test]
    fn slow_servo_rejected() {
        let mut p = CellParams::default();
        p.arduino.servo_travel_deg_per_s = 224.0;
        assert!(p.validate().is_err());
        p.arduino.servo_travel_deg_per_s = 225.0;
        p.validate().unwrap();
    }

    #[test]
    fn partial_vision_override_keeps_names() {
        let p: VisionParams = toml::from_str("[GRNSCAN]\nfind_threshold_delta = 0.2\n").unwrap();
        assert_eq!(p.process("GRNSCAN").unwrap().find_threshold_delta, 0.2);
        assert_eq!(p.process("REDSCAN").unwrap().name, "REDSCAN");
        assert!(p.process("FOO").is_none());
    }
}
