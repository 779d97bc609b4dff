//! Keep-or-remove decision for a scanned part.

use serde::{Deserialize, Serialize};

use crate::color::ColorFlags;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PartMatch,
    Remove,
}

/// Detection after the green-and-blue override: when both are seen the
/// part is treated as blue only.
pub fn effective_detection(detected: ColorFlags, override_enabled: bool) -> ColorFlags {
    if override_enabled && detected.green && detected.blue {
        ColorFlags {
            green: false,
            ..detected
        }
    } else {
        detected
    }
}

/// A part is kept when any detected color is selected. Parts with no
/// detection are removed.
pub fn verdict(detected: ColorFlags, selected: ColorFlags, override_enabled: bool) -> Verdict {
    let d = effective_detection(detected, override_enabled);
    if d.mask() & selected.mask() != 0 {
        Verdict::PartMatch
    } else {
        Verdict::Remove
    }
}
