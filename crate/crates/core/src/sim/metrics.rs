use serde::{Deserialize, Serialize};

use crate::color::ColorClass;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorCounts {
    pub red: u32,
    pub green: u32,
    pub blue: u32,
    pub unknown: u32,
}

impl ColorCounts {
    pub fn bump(&mut self, class: ColorClass) {
        match class {
            ColorClass::Red => self.red += 1,
            ColorClass::Green => self.green += 1,
            ColorClass::Blue => self.blue += 1,
            ColorClass::Unknown => self.unknown += 1,
        }
    }

    pub fn total(&self) -> u32 {
        self.red + self.green + self.blue + self.unknown
    }
}

/// End-of-run summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub end_time_s: f64,
    pub parts_spawned: u32,
    /// Parts that left the belt end, by true color.
    pub kept: ColorCounts,
    /// Parts in the reject bin, by true color.
    pub removed: ColorCounts,
    pub on_belt: u32,
    pub held: u32,
    /// Still queued at the feeder when the run ended.
    pub waiting_at_feeder: u32,
    pub scans: u32,
    pub verdicts: u32,
    /// Verdicts that disagree with the part's true color and the selection
    /// in force when the verdict was issued.
    pub misclassifications: u32,
    /// Beam break to the end of the sort program, averaged over parts.
    pub mean_cycle_time_s: Option<f64>,
    /// Beam break to verdict.
    pub min_verdict_latency_s: Option<f64>,
    pub mean_verdict_latency_s: Option<f64>,
}

pub(crate) fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}
