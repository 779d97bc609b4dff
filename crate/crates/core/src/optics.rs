//! Three-channel optical model: part reflectance seen through a camera
//! filter under a light source, collapsed to a single monochrome intensity.

use serde::{Deserialize, Serialize};

use crate::color::{Channel, ColorClass, Rgb};
use crate::error::ConfigError;
use crate::workcell::Part;

/// Filters mounted on the selector wheel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterName {
    RedFilter,
    GreenFilter,
    BlueFilter,
    NoFilter,
}

impl FilterName {
    pub fn channel(self) -> Option<Channel> {
        match self {
            FilterName::RedFilter => Some(Channel::Red),
            FilterName::GreenFilter => Some(Channel::Green),
            FilterName::BlueFilter => Some(Channel::Blue),
            FilterName::NoFilter => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub name: FilterName,
    pub transmission: Rgb,
}

impl FilterSpec {
    pub const NONE: FilterSpec = FilterSpec {
        name: FilterName::NoFilter,
        transmission: Rgb::ONE,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightSpec {
    pub emission: Rgb,
}

impl LightSpec {
    pub const DARK: LightSpec = LightSpec {
        emission: Rgb::ZERO,
    };
}

/// Brightness a monochrome sensor reports for one surface:
/// `clamp(sum over channels of light * transmission * reflectance, 0, 1)`.
pub fn pixel_intensity(reflectance: Rgb, filter: &FilterSpec, light: &LightSpec) -> f64 {
    let t = filter.transmission;
    let e = light.emission;
    let sum = e.r * t.r * reflectance.r + e.g * t.g * reflectance.g + e.b * t.b * reflectance.b;
    sum.clamp(0.0, 1.0)
}

/// Edge misdetection model: near the belt edge a blue part leaks into the
/// green scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeLeak {
    pub margin_mm: f64,
    pub factor: f64,
}

impl Default for EdgeLeak {
    fn default() -> Self {
        EdgeLeak {
            margin_mm: 60.0,
            factor: 2.0,
        }
    }
}

/// Effective reflectance of `part` for a scan through `scan_channel`.
///
/// Only the blue-part/green-scan pair is affected, and only when the part
/// sits farther than `margin_mm` from the belt centerline.
pub fn apply_edge_leak(part: &Part, scan_channel: Channel, leak: &EdgeLeak) -> Rgb {
    let refl = part.reflectance;
    let near_edge = part.position_mm.1.abs() > leak.margin_mm;
    if near_edge && scan_channel == Channel::Green && refl.dominant() == Some(Channel::Blue) {
        refl.with(Channel::Green, (refl.g * leak.factor).min(1.0))
    } else {
        refl
    }
}

/// Tunable optical constants for the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsParams {
    pub red_block: Rgb,
    pub green_block: Rgb,
    pub blue_block: Rgb,
    pub belt: Rgb,
    pub red_filter: Rgb,
    pub green_filter: Rgb,
    pub blue_filter: Rgb,
    /// Room light used for filter-only imaging.
    pub ambient: Rgb,
    /// Stray light added to every LED color.
    pub led_residual: Rgb,
    /// Emission of a fully driven LED channel.
    pub led_gain: f64,
    pub edge_leak: EdgeLeak,
}

impl Default for OpticsParams {
    fn default() -> Self {
        OpticsParams {
            red_block: Rgb::new(0.80, 0.10, 0.08),
            green_block: Rgb::new(0.10, 0.70, 0.12),
            blue_block: Rgb::new(0.08, 0.12, 0.75),
            belt: Rgb::splat(0.05),
            red_filter: Rgb::new(0.85, 0.10, 0.08),
            green_filter: Rgb::new(0.10, 0.60, 0.55),
            blue_filter: Rgb::new(0.08, 0.55, 0.60),
            ambient: Rgb::splat(0.6),
            led_residual: Rgb::splat(0.1),
            led_gain: 1.0,
            edge_leak: EdgeLeak::default(),
        }
    }
}

impl OpticsParams {
    pub fn block(&self, class: ColorClass) -> Option<Rgb> {
        match class {
            ColorClass::Red => Some(self.red_block),
            ColorClass::Green => Some(self.green_block),
            ColorClass::Blue => Some(self.blue_block),
            ColorClass::Unknown => None,
        }
    }

    pub fn filter(&self, name: FilterName) -> FilterSpec {
        let transmission = match name {
            FilterName::RedFilter => self.red_filter,
            FilterName::GreenFilter => self.green_filter,
            FilterName::BlueFilter => self.blue_filter,
            FilterName::NoFilter => Rgb::ONE,
        };
        FilterSpec { name, transmission }
    }

    pub fn filter_for(&self, channel: Channel) -> FilterSpec {
        self.filter(match channel {
            Channel::Red => FilterName::RedFilter,
            Channel::Green => FilterName::GreenFilter,
            Channel::Blue => FilterName::BlueFilter,
        })
    }

    pub fn ambient_light(&self) -> LightSpec {
        LightSpec {
            emission: self.ambient,
        }
    }

    /// Light produced by the LED ring driven with 8-bit values.
    pub fn led_light(&self, rgb8: [u8; 3]) -> LightSpec {
        let f = |v: u8, residual: f64| residual + self.led_gain * f64::from(v) / 255.0;
        LightSpec {
            emission: Rgb::new(
                f(rgb8[0], self.led_residual.r),
                f(rgb8[1], self.led_residual.g),
                f(rgb8[2], self.led_residual.b),
            ),
        }
    }

    /// LED ring set to a single primary.
    pub fn led_for(&self, channel: Channel) -> LightSpec {
        let mut rgb8 = [0u8; 3];
        rgb8[channel as usize] = 255;
        self.led_light(rgb8)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = [
            ("red_block", self.red_block),
            ("green_block", self.green_block),
            ("blue_block", self.blue_block),
            ("belt", self.belt),
            ("red_filter", self.red_filter),
            ("green_filter", self.green_filter),
            ("blue_filter", self.blue_filter),
        ];
        for (name, v) in unit {
            if !v.within(0.0, 1.0) {
                return Err(ConfigError::new(format!(
                    "optics.{name} must lie in [0,1], got {v}"
                )));
            }
        }
        for (name, v) in [
            ("ambient", self.ambient),
            ("led_residual", self.led_residual),
        ] {
            if !v.within(0.0, f64::MAX) {
                return Err(ConfigError::new(format!(
                    "optics.{name} must be nonnegative, got {v}"
                )));
            }
        }
        if !(self.led_gain >= 0.0) {
            return Err(ConfigError::new("optics.led_gain must be nonnegative"));
        }
        if !(self.edge_leak.margin_mm >= 0.0 && self.edge_leak.factor >= 0.0) {
            return Err(ConfigError::new(
                "optics.edge_leak values must be nonnegative",
            ));
        }
        Ok(())
    }
}
