//! Color primitives shared by the optics model, the workcell and the PLC.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A per-channel triple. Used for reflectance, filter transmission and
/// light emission; the meaning depends on the owner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl Rgb {
    pub const ZERO: Rgb = Rgb::new(0.0, 0.0, 0.0);
    pub const ONE: Rgb = Rgb::new(1.0, 1.0, 1.0);

    pub const fn new(r: f64, g: f64, b: f64) -> Self {
        Rgb { r, g, b }
    }

    pub const fn splat(v: f64) -> Self {
        Rgb { r: v, g: v, b: v }
    }

    pub fn get(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Red => self.r,
            Channel::Green => self.g,
            Channel::Blue => self.b,
        }
    }

    pub fn with(mut self, channel: Channel, value: f64) -> Self {
        match channel {
            Channel::Red => self.r = value,
            Channel::Green => self.g = value,
            Channel::Blue => self.b = value,
        }
        self
    }

    pub fn components(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    /// True when every component lies in `[lo, hi]` (and is not NaN).
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.components().iter().all(|c| (lo..=hi).contains(c))
    }

    /// Channel with the strictly largest component, if any.
    pub fn dominant(&self) -> Option<Channel> {
        let [r, g, b] = self.components();
        if r > g && r > b {
            Some(Channel::Red)
        } else if g > r && g > b {
            Some(Channel::Green)
        } else if b > r && b > g {
            Some(Channel::Blue)
        } else {
            None
        }
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.r, self.g, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Red,
    Green,
    Blue,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Red, Channel::Green, Channel::Blue];
}

/// Nominal color of a part. `Unknown` parts carry a custom reflectance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorClass {
    Red,
    Green,
    Blue,
    Unknown,
}

impl ColorClass {
    pub fn channel(self) -> Option<Channel> {
        match self {
            ColorClass::Red => Some(Channel::Red),
            ColorClass::Green => Some(Channel::Green),
            ColorClass::Blue => Some(Channel::Blue),
            ColorClass::Unknown => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            ColorClass::Red => 'R',
            ColorClass::Green => 'G',
            ColorClass::Blue => 'B',
            ColorClass::Unknown => '?',
        }
    }
}

impl From<Channel> for ColorClass {
    fn from(c: Channel) -> Self {
        match c {
            Channel::Red => ColorClass::Red,
            Channel::Green => ColorClass::Green,
            Channel::Blue => ColorClass::Blue,
        }
    }
}

/// Three independent booleans, one per color. Used both for detections
/// reported by the scan program and for the operator's accepted colors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorFlags {
    #[serde(default)]
    pub red: bool,
    #[serde(default)]
    pub green: bool,
    #[serde(default)]
    pub blue: bool,
}

impl ColorFlags {
    pub const NONE: ColorFlags = ColorFlags::new(false, false, false);

    pub const fn new(red: bool, green: bool, blue: bool) -> Self {
        ColorFlags { red, green, blue }
    }

    pub fn only(channel: Channel) -> Self {
        ColorFlags::NONE.with(channel, true)
    }

    pub fn get(&self, channel: Channel) -> bool {
        match channel {
            Channel::Red => self.red,
            Channel::Green => self.green,
            Channel::Blue => self.blue,
        }
    }

    pub fn with(mut self, channel: Channel, value: bool) -> Self {
        match channel {
            Channel::Red => self.red = value,
            Channel::Green => self.green = value,
            Channel::Blue => self.blue = value,
        }
        self
    }

    pub fn contains(&self, class: ColorClass) -> bool {
        class.channel().is_some_and(|c| self.get(c))
    }

    pub fn is_empty(&self) -> bool {
        !(self.red || self.green || self.blue)
    }

    /// Bit `i` of `mask` (0 = red, 1 = green, 2 = blue).
    pub fn from_mask(mask: u8) -> Self {
        ColorFlags::new(mask & 1 != 0, mask & 2 != 0, mask & 4 != 0)
    }

    pub fn mask(&self) -> u8 {
        self.red as u8 | (self.green as u8) << 1 | (self.blue as u8) << 2
    }
}

impl fmt::Display for ColorFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        let mut first = true;
        for (set, name) in [(self.red, "R"), (self.green, "G"), (self.blue, "B")] {
            if set {
                if !first {
                    f.write_str(",")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        f.write_str("}")
    }
}
