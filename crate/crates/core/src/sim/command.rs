use serde::{Deserialize, Serialize};

use crate::color::ColorClass;

/// Operator actions. Each maps onto a panel tag or the part feeder, so
/// scripted and live sessions reach the same states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    /// Momentary HMI start.
    Start,
    /// Momentary HMI stop.
    Stop,
    /// Accepted colors on the block selection screen.
    SelectColors { r: bool, g: bool, b: bool },
    /// Green-and-blue override toggle.
    SetOverride { enabled: bool },
    /// Hands a part to the feeder.
    SpawnPart {
        color: ColorClass,
        #[serde(default)]
        y_offset: f64,
    },
    /// Momentary fault reset pushbutton.
    FaultReset,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Start => "start",
            Command::Stop => "stop",
            Command::SelectColors { .. } => "select_colors",
            Command::SetOverride { .. } => "set_override",
            Command::SpawnPart { .. } => "spawn_part",
            Command::FaultReset => "fault_reset",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_form() {
        let c: Command =
            serde_json::from_str(r#"{"type":"select_colors","r":true,"g":false,"b":false}"#)
                .unwrap();
        assert_eq!(
            c,
            Command::SelectColors {
                r: true,
                g: false,
                b: false
            }
        );
        let c: Command = serde_json::from_str(r#"{"type":"spawn_part","color":"green"}"#).unwrap();
        assert_eq!(
            c,
            Command::SpawnPart {
                color: ColorClass::Green,
                y_offset: 0.0
            }
        );
        assert!(serde_json::from_str::<Command>(r#"{"type":"launch"}"#).is_err());
        assert!(
            serde_json::from_str::<Command>(r#"{"type":"set_override","enabled":true,"x":1}"#)
                .is_err()
        );
        assert_eq!(
            serde_json::to_string(&Command::Stop).unwrap(),
            r#"{"type":"stop"}"#
        );
    }
}
