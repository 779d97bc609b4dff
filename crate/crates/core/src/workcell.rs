//! Geometry of the cell: belt, parts, beam sensor and reject bin.
//!
//! Coordinates are millimetres in the robot's user frame: `x` runs along the
//! belt in the direction of travel, `y` is lateral from the belt centerline,
//! `z` is height above the belt surface.

use serde::{Deserialize, Serialize};

use crate::color::{ColorClass, Rgb};
use crate::error::ConfigError;

/// Geometric tolerance for edge tests, in mm.
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartState {
    OnBelt,
    HeldByRobot,
    InRejectBin,
    PassedThrough,
}

impl PartState {
    pub fn is_terminal(self) -> bool {
        matches!(self, PartState::InRejectBin | PartState::PassedThrough)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub id: u32,
    pub color_class: ColorClass,
    pub reflectance: Rgb,
    /// (x along belt, y lateral from centerline)
    pub position_mm: (f64, f64),
    pub rotation_deg: f64,
    pub size_mm: f64,
    pub state: PartState,
}

impl Part {
    pub fn new(id: u32, color_class: ColorClass, reflectance: Rgb, size_mm: f64) -> Self {
        Part {
            id,
            color_class,
            reflectance,
            position_mm: (0.0, 0.0),
            rotation_deg: 0.0,
            size_mm,
            state: PartState::OnBelt,
        }
    }

    pub fn at(mut self, x: f64, y: f64) -> Self {
        self.position_mm = (x, y);
        self
    }

    pub fn rotated(mut self, deg: f64) -> Self {
        self.rotation_deg = deg;
        self
    }

    pub fn x(&self) -> f64 {
        self.position_mm.0
    }

    pub fn y(&self) -> f64 {
        self.position_mm.1
    }

    fn leading_edge(&self) -> f64 {
        self.x() + self.size_mm / 2.0
    }

    fn trailing_edge(&self) -> f64 {
        self.x() - self.size_mm / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConveyorState {
    pub running: bool,
    pub speed_mm_per_s: f64,
    pub length_mm: f64,
    pub belt_half_width_mm: f64,
    pub beam_sensor_x_mm: f64,
    pub camera_window_x_mm: f64,
}

impl ConveyorState {
    pub fn from_params(p: &ConveyorParams) -> Self {
        ConveyorState {
            running: false,
            speed_mm_per_s: p.speed_mm_per_s,
            length_mm: p.length_mm,
            belt_half_width_mm: p.half_width_mm,
            beam_sensor_x_mm: p.beam_sensor_x_mm,
            camera_window_x_mm: p.camera_x_mm,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectBin {
    contents: Vec<u32>,
    pub location_mm: (f64, f64),
    pub radius_mm: f64,
}

impl RejectBin {
    pub fn new(location_mm: (f64, f64), radius_mm: f64) -> Self {
        RejectBin {
            contents: Vec::new(),
            location_mm,
            radius_mm,
        }
    }

    pub fn contents(&self) -> &[u32] {
        &self.contents
    }

    pub fn accepts(&self, x: f64, y: f64) -> bool {
        let (bx, by) = self.location_mm;
        (x - bx).hypot(y - by) <= self.radius_mm
    }

    pub fn push(&mut self, id: u32) {
        self.contents.push(id);
    }
}

/// Moves every on-belt part forward by `speed * dt` when the belt runs.
/// Returns the ids of parts that left the belt end during this step, in
/// part order.
pub fn advance_conveyor(state: &ConveyorState, parts: &mut [Part], dt_s: f64) -> Vec<u32> {
    let mut passed = Vec::new();
    if !state.running || dt_s <= 0.0 {
        return passed;
    }
    let travel = state.speed_mm_per_s * dt_s;
    for part in parts.iter_mut().filter(|p| p.state == PartState::OnBelt) {
        part.position_mm.0 += travel;
        if part.x() >= state.length_mm - GEOM_EPS {
            part.state = PartState::PassedThrough;
            passed.push(part.id);
        }
    }
    passed
}

/// True iff some on-belt part's x-extent straddles the beam line.
pub fn beam_blocked(state: &ConveyorState, parts: &[Part]) -> bool {
    blocking_part(state, parts).is_some()
}

/// The first on-belt part whose x-extent straddles the beam line.
pub fn blocking_part<'a>(state: &ConveyorState, parts: &'a [Part]) -> Option<&'a Part> {
    let beam = state.beam_sensor_x_mm;
    parts.iter().find(|p| {
        p.state == PartState::OnBelt
            && p.trailing_edge() <= beam + GEOM_EPS
            && p.leading_edge() >= beam - GEOM_EPS
    })
}

/// Seconds of belt travel until the beam state changes or a part leaves the
/// belt, whichever is first. `None` when the belt is stopped or nothing on it
/// will ever cross a boundary.
pub fn time_to_next_edge(state: &ConveyorState, parts: &[Part]) -> Option<f64> {
    if !state.running || state.speed_mm_per_s <= 0.0 {
        return None;
    }
    let beam = state.beam_sensor_x_mm;
    let v = state.speed_mm_per_s;
    let mut best: Option<f64> = None;
    let mut consider = |d: f64| {
        if d >= 0.0 {
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    };
    for p in parts.iter().filter(|p| p.state == PartState::OnBelt) {
        if p.leading_edge() < beam - GEOM_EPS {
            consider((beam - p.leading_edge()) / v);
        } else if p.trailing_edge() <= beam + GEOM_EPS {
            // blocked now, clears once the trailing edge passes
            consider((beam + 2.0 * GEOM_EPS - p.trailing_edge()) / v);
        }
        consider((state.length_mm - p.x()) / v);
    }
    best
}

/// Belt and part geometry parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConveyorParams {
    pub speed_mm_per_s: f64,
    pub length_mm: f64,
    pub half_width_mm: f64,
    pub beam_sensor_x_mm: f64,
    /// Belt x under the camera center; also the taught vision reference.
    pub camera_x_mm: f64,
    pub part_size_mm: f64,
    /// Where the feeder places new parts.
    pub spawn_x_mm: f64,
    /// Minimum center-to-center distance the feeder keeps between parts.
    pub min_pitch_mm: f64,
}

impl Default for ConveyorParams {
    fn default() -> Self {
        ConveyorParams {
            speed_mm_per_s: 100.0,
            length_mm: 1200.0,
            half_width_mm: 150.0,
            beam_sensor_x_mm: 600.0,
            camera_x_mm: 580.0,
            part_size_mm: 40.0,
            spawn_x_mm: 0.0,
            min_pitch_mm: 240.0,
        }
    }
}

impl ConveyorParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.speed_mm_per_s > 0.0) {
            return Err(ConfigError::new("conveyor.speed_mm_per_s must be positive"));
        }
        if !(self.length_mm > 0.0 && self.half_width_mm > 0.0 && self.part_size_mm > 0.0) {
            return Err(ConfigError::new("conveyor dimensions must be positive"));
        }
        if !(0.0..=self.length_mm).contains(&self.beam_sensor_x_mm) {
            return Err(ConfigError::new(
                "conveyor.beam_sensor_x_mm must lie on the belt",
            ));
        }
        if !(0.0..=self.length_mm).contains(&self.camera_x_mm) {
            return Err(ConfigError::new(
                "conveyor.camera_x_mm must lie on the belt",
            ));
        }
        if self.spawn_x_mm + self.part_size_mm / 2.0 >= self.beam_sensor_x_mm {
            return Err(ConfigError::new(
                "conveyor.spawn_x_mm must be upstream of the beam sensor",
            ));
        }
        if self.min_pitch_mm < self.part_size_mm {
            return Err(ConfigError::new(format!(
                "conveyor.min_pitch_mm ({}) is smaller than the part size ({}); parts would overlap",
                self.min_pitch_mm, self.part_size_mm
            )));
        }
        Ok(())
    }
}
