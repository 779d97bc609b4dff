//! Filter-wheel and LED-ring controller.
//!
//! Two pull-up inputs select one of three (angle, color) pairs. The first
//! input is tested before the second, so with both pulled low the green
//! setting wins.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::optics::FilterName;

/// A wheel is settled once it is this close to its commanded angle.
pub const SETTLED_TOLERANCE_DEG: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    High,
    Low,
}

impl Level {
    /// Level seen on a pull-up input wired through a relay contact that
    /// closes to ground while the driving output is ON.
    pub fn through_relay(output_on: bool) -> Level {
        if output_on {
            Level::Low
        } else {
            Level::High
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArduinoConfig {
    pub n_leds: u16,
    pub led_pin: u8,
    pub servo_pin: u8,
    pub servo_min_us: u16,
    pub servo_max_us: u16,
    pub input1_pin: u8,
    pub input2_pin: u8,
    pub servo_travel_deg_per_s: f64,
}

impl Default for ArduinoConfig {
    fn default() -> Self {
        ArduinoConfig {
            n_leds: 241,
            led_pin: 6,
            servo_pin: 9,
            servo_min_us: 500,
            servo_max_us: 2500,
            input1_pin: 2,
            input2_pin: 3,
            servo_travel_deg_per_s: 300.0,
        }
    }
}

impl ArduinoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.servo_travel_deg_per_s > 0.0) {
            return Err(ConfigError::new(
                "arduino.servo_travel_deg_per_s must be positive",
            ));
        }
        if self.servo_min_us >= self.servo_max_us {
            return Err(ConfigError::new(
                "arduino.servo_min_us must be below servo_max_us",
            ));
        }
        Ok(())
    }

    /// Seconds the wheel needs to swing `deg` degrees.
    pub fn travel_time_s(&self, deg: f64) -> f64 {
        deg.abs() / self.servo_travel_deg_per_s
    }
}

/// The loop body: input levels to (servo angle, LED color).
pub fn evaluate(input_a: Level, input_b: Level) -> (f64, [u8; 3]) {
    if input_a == Level::Low {
        (180.0, [0, 255, 0])
    } else if input_b == Level::Low {
        (0.0, [0, 0, 255])
    } else {
        (90.0, [255, 0, 0])
    }
}

/// Which filter sits in front of the lens at a commanded angle.
pub fn filter_at_angle(angle_deg: f64) -> FilterName {
    match angle_deg.round() as i64 {
        90 => FilterName::RedFilter,
        180 => FilterName::GreenFilter,
        0 => FilterName::BlueFilter,
        _ => FilterName::NoFilter,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArduinoState {
    pub input_a: Level,
    pub input_b: Level,
    pub commanded_angle_deg: f64,
    /// Color written to every pixel of the ring.
    pub led_rgb: [u8; 3],
    pub servo_actual_angle_deg: f64,
}

impl Default for ArduinoState {
    /// Power-on state: inputs float high, wheel parked on red.
    fn default() -> Self {
        let (angle, led) = evaluate(Level::High, Level::High);
        ArduinoState {
            input_a: Level::High,
            input_b: Level::High,
            commanded_angle_deg: angle,
            led_rgb: led,
            servo_actual_angle_deg: angle,
        }
    }
}

impl ArduinoState {
    /// Applies new input levels. Returns true when the command changed.
    pub fn set_inputs(&mut self, input_a: Level, input_b: Level) -> bool {
        self.input_a = input_a;
        self.input_b = input_b;
        let (angle, led) = evaluate(input_a, input_b);
        let changed = angle != self.commanded_angle_deg || led != self.led_rgb;
        self.commanded_angle_deg = angle;
        self.led_rgb = led;
        changed
    }

    pub fn settled(&self) -> bool {
        (self.servo_actual_angle_deg - self.commanded_angle_deg).abs() < SETTLED_TOLERANCE_DEG
    }

    pub fn filter(&self) -> FilterName {
        filter_at_angle(self.commanded_angle_deg)
    }
}

/// Moves the wheel toward its commanded angle for `dt_s` seconds.
pub fn step_servo(state: &ArduinoState, config: &ArduinoConfig, dt_s: f64) -> ArduinoState {
    let mut next = state.clone();
    if dt_s <= 0.0 {
        return next;
    }
    let remaining = state.commanded_angle_deg - state.servo_actual_angle_deg;
    let reach = config.servo_travel_deg_per_s * dt_s;
    next.servo_actual_angle_deg = if remaining.abs() <= reach {
        state.commanded_angle_deg
    } else {
        state.servo_actual_angle_deg + reach.copysign(remaining)
    };
    next
}
