//! Scenario documents: what to feed the cell, how the operator acts, and
//! parameter overrides.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::command::Command;
use super::params::CellParams;
use crate::color::{ColorClass, ColorFlags, Rgb};
use crate::error::{ConfigError, ScenarioError};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Tolerance on spawn spacing, in seconds.
const SPACING_EPS_S: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartSpec {
    pub at_s: f64,
    pub color: ColorClass,
    #[serde(default)]
    pub y_mm: f64,
    #[serde(default)]
    pub rz_deg: f64,
    /// Overrides the color's default reflectance. Required for `unknown`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflectance: Option<Rgb>,
}

/// Random part source. Each quantity draws from its own ChaCha8 stream
/// keyed by the scenario seed: stream 1 spawn gaps, 2 colors, 3 poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpawnerSpec {
    pub count: u32,
    pub start_s: f64,
    /// Gap between consecutive spawns, drawn uniformly from this range.
    pub min_gap_s: f64,
    pub max_gap_s: f64,
    /// Relative weights of red, green and blue.
    pub weights: [f64; 3],
    /// Lateral offsets are uniform in `[-y_max_mm, y_max_mm]`.
    pub y_max_mm: f64,
    pub rz_max_deg: f64,
}

impl Default for SpawnerSpec {
    fn default() -> Self {
        SpawnerSpec {
            count: 0,
            start_s: 0.0,
            min_gap_s: 2.4,
            max_gap_s: 6.0,
            weights: [1.0, 1.0, 1.0],
            y_max_mm: 0.0,
            rz_max_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorAction {
    pub at_s: f64,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default)]
    pub selected: ColorFlags,
    #[serde(default)]
    pub override_enabled: bool,
    /// Press start at time zero.
    #[serde(default = "yes")]
    pub auto_start: bool,
    #[serde(default)]
    pub parts: Vec<PartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spawner: Option<SpawnerSpec>,
    #[serde(default)]
    pub operator: Vec<OperatorAction>,
    #[serde(default)]
    pub params: CellParams,
}

fn yes() -> bool {
    true
}

/// A part due at the feeder.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledPart {
    pub at_us: u64,
    pub color: ColorClass,
    pub reflectance: Rgb,
    pub y_mm: f64,
    pub rz_deg: f64,
}

pub fn secs_to_us(s: f64) -> u64 {
    (s * 1e6).round() as u64
}

impl Scenario {
    /// A scenario with default parameters and no parts.
    pub fn new(duration_s: f64) -> Self {
        Scenario {
            schema_version: SCENARIO_SCHEMA_VERSION,
            seed: 0,
            duration_s,
            selected: ColorFlags::NONE,
            override_enabled: false,
            auto_start: true,
            parts: Vec::new(),
            spawner: None,
            operator: Vec::new(),
            params: CellParams::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Hex SHA-256 of the scenario with its seed cleared, so runs that differ
    /// only by seed share a hash.
    pub fn hash(&self) -> String {
        let mut s = self.clone();
        s.seed = 0;
        let canonical = serde_json::to_vec(&s).expect("scenario serializes");
        hex::encode(Sha256::digest(canonical))
    }

    pub fn duration_us(&self) -> u64 {
        secs_to_us(self.duration_s)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(ConfigError::new(format!(
                "schema_version {} is not supported (expected {SCENARIO_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(ConfigError::new("duration_s must be positive"));
        }
        self.params.validate()?;
        let conv = &self.params.conveyor;
        let lateral_limit = conv.half_width_mm - conv.part_size_mm / 2.0;
        for (i, p) in self.parts.iter().enumerate() {
            if !(p.at_s >= 0.0 && p.at_s.is_finite()) {
                return Err(ConfigError::new(format!(
                    "parts[{i}].at_s must be nonnegative"
                )));
            }
            if p.y_mm.abs() > lateral_limit {
                return Err(ConfigError::new(format!(
                    "parts[{i}].y_mm {} puts the part off the belt (limit {lateral_limit})",
                    p.y_mm
                )));
            }
            match (p.color, p.reflectance) {
                (ColorClass::Unknown, None) => {
                    return Err(ConfigError::new(format!(
                        "parts[{i}] has color unknown and needs a reflectance"
                    )))
                }
                (_, Some(r)) if !r.within(0.0, 1.0) => {
                    return Err(ConfigError::new(format!(
                        "parts[{i}].reflectance must lie in [0,1]"
                    )))
                }
                _ => {}
            }
        }
        for (i, w) in self.parts.windows(2).enumerate() {
            if w[1].at_s < w[0].at_s {
                return Err(ConfigError::new(format!(
                    "parts[{}] is out of time order",
                    i + 1
                )));
            }
        }
        for (i, a) in self.operator.iter().enumerate() {
            if !(a.at_s >= 0.0 && a.at_s.is_finite()) {
                return Err(ConfigError::new(format!(
                    "operator[{i}].at_s must be nonnegative"
                )));
            }
        }
        let min_gap = conv.min_pitch_mm / conv.speed_mm_per_s;
        if let Some(sp) = &self.spawner {
            if sp.min_gap_s + SPACING_EPS_S < min_gap || sp.max_gap_s < sp.min_gap_s {
                return Err(ConfigError::new(format!(
                    "spawner gap range [{}, {}] must start at {min_gap} s or more",
                    sp.min_gap_s, sp.max_gap_s
                )));
            }
            if sp.weights.iter().any(|w| !(*w >= 0.0)) || sp.weights.iter().sum::<f64>() <= 0.0 {
                return Err(ConfigError::new(
                    "spawner.weights must be nonnegative with a positive sum",
                ));
            }
            if !(sp.y_max_mm >= 0.0 && sp.y_max_mm <= lateral_limit) {
                return Err(ConfigError::new(format!(
                    "spawner.y_max_mm must lie in [0, {lateral_limit}]"
                )));
            }
            if !(sp.start_s >= 0.0) || !(sp.rz_max_deg >= 0.0) {
                return Err(ConfigError::new(
                    "spawner.start_s and rz_max_deg must be nonnegative",
                ));
            }
        }
        let schedule = self.schedule();
        for w in schedule.windows(2) {
            let gap = (w[1].at_us - w[0].at_us) as f64 / 1e6;
            if gap + SPACING_EPS_S < min_gap {
                return Err(ConfigError::new(format!(
                    "spawns at {:.3} s and {:.3} s are {gap:.3} s apart; the belt needs {min_gap:.3} s \
                     ({} mm pitch at {} mm/s) to keep parts from overlapping",
                    w[0].at_us as f64 / 1e6,
                    w[1].at_us as f64 / 1e6,
                    conv.min_pitch_mm,
                    conv.speed_mm_per_s
                )));
            }
        }
        Ok(())
    }

    /// Every part this scenario will hand to the feeder, in time order.
    pub fn schedule(&self) -> Vec<ScheduledPart> {
        let optics = &self.params.optics;
        let mut out: Vec<ScheduledPart> = self
            .parts
            .iter()
            .map(|p| ScheduledPart {
                at_us: secs_to_us(p.at_s),
                color: p.color,
                reflectance: p
                    .reflectance
                    .or_else(|| optics.block(p.color))
                    .unwrap_or(Rgb::ZERO),
                y_mm: p.y_mm,
                rz_deg: p.rz_deg,
            })
            .collect();
        if let Some(sp) = &self.spawner {
            out.extend(generate(sp, self.seed, &self.params));
        }
        out.sort_by_key(|p| p.at_us);
        out
    }
}

fn stream(seed: u64, n: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n);
    rng
}

fn generate(sp: &SpawnerSpec, seed: u64, params: &CellParams) -> Vec<ScheduledPart> {
    let mut times = stream(seed, 1);
    let mut colors = stream(seed, 2);
    let mut poses = stream(seed, 3);
    let Ok(pick) = WeightedIndex::new(sp.weights) else {
        return Vec::new();
    };
    let classes = [ColorClass::Red, ColorClass::Green, ColorClass::Blue];
    let mut t = sp.start_s;
    let mut out = Vec::with_capacity(sp.count as usize);
    for i in 0..sp.count {
        if i > 0 {
            t += times.random_range(sp.min_gap_s..=sp.max_gap_s);
        }
        let color = classes[pick.sample(&mut colors)];
        let y_mm = if sp.y_max_mm > 0.0 {
            poses.random_range(-sp.y_max_mm..=sp.y_max_mm)
        } else {
            0.0
        };
        let rz_deg = if sp.rz_max_deg > 0.0 {
            poses.random_range(-sp.rz_max_deg..=sp.rz_max_deg)
        } else {
            0.0
        };
        out.push(ScheduledPart {
            at_us: secs_to_us(t),
            color,
            reflectance: params.optics.block(color).unwrap_or(Rgb::ZERO),
            y_mm,
            rz_deg,
        });
    }
    out
}
