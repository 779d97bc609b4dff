//! Shared fixtures for the benchmarks.

use colorsort_core::sim::{CellParams, PartSpec, Scenario};
use colorsort_core::vision::{Scene, SceneBlock};
use colorsort_core::{ColorClass, ColorFlags};

/// One red block centered under the camera.
pub fn red_scene(p: &CellParams) -> Scene {
    Scene {
        belt: p.optics.belt,
        camera_x_mm: p.conveyor.camera_x_mm,
        blocks: vec![SceneBlock {
            reflectance: p.optics.red_block,
            center_mm: (p.conveyor.camera_x_mm + 12.0, -20.0),
            size_mm: p.conveyor.part_size_mm,
            rotation_deg: 15.0,
        }],
    }
}

/// Five centered parts, R G B G R, red accepted.
pub fn five_parts() -> Scenario {
    let mut s = Scenario::new(180.0);
    s.selected = ColorFlags::new(true, false, false);
    let colors = [
        ColorClass::Red,
        ColorClass::Green,
        ColorClass::Blue,
        ColorClass::Green,
        ColorClass::Red,
    ];
    s.parts = colors
        .iter()
        .enumerate()
        .map(|(i, &color)| PartSpec {
            at_s: 2.4 * i as f64,
            color,
            y_mm: 0.0,
            rz_deg: 0.0,
            reflectance: None,
        })
        .collect();
    s
}
