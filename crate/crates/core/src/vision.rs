//! Monochrome frame synthesis and contrast-blob finding.

use serde::{Deserialize, Serialize};

use crate::color::Rgb;
use crate::error::{ConfigError, VisionError};
use crate::optics::{pixel_intensity, FilterSpec, LightSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub width_px: usize,
    pub height_px: usize,
    pub mm_per_px: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            width_px: 640,
            height_px: 480,
            mm_per_px: 0.5,
        }
    }
}

impl CameraConfig {
    /// Belt coordinates of the center of pixel `(col, row)` for a camera
    /// centered over `(center_x, 0)`.
    pub fn pixel_to_mm(&self, center_x: f64, col: f64, row: f64) -> (f64, f64) {
        let (dx, dy) = self.pixel_to_offset(col, row);
        (center_x + dx, dy)
    }

    /// Offset from the image center, in mm, of a (possibly fractional) pixel
    /// coordinate.
    pub fn pixel_to_offset(&self, col: f64, row: f64) -> (f64, f64) {
        (
            (col + 0.5 - self.width_px as f64 / 2.0) * self.mm_per_px,
            (row + 0.5 - self.height_px as f64 / 2.0) * self.mm_per_px,
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.width_px == 0 || self.height_px == 0 || !(self.mm_per_px > 0.0) {
            return Err(ConfigError::new(
                "camera dimensions and scale must be positive",
            ));
        }
        Ok(())
    }
}

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: f64) {
        self.pixels[row * self.width + col] = value.clamp(0.0, 1.0);
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Binary PGM (P5, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|v| (v * 255.0).round() as u8));
        out
    }
}

/// One rigid square block as seen by the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneBlock {
    pub reflectance: Rgb,
    pub center_mm: (f64, f64),
    pub size_mm: f64,
    pub rotation_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub belt: Rgb,
    /// Belt x under the image center.
    pub camera_x_mm: f64,
    pub blocks: Vec<SceneBlock>,
}

/// What sits in front of the lens when the shutter fires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterPosition {
    Settled(FilterSpec),
    Moving { actual_deg: f64, commanded_deg: f64 },
}

/// Renders the belt and every block into a monochrome frame.
pub fn render(
    scene: &Scene,
    filter: FilterPosition,
    light: &LightSpec,
    camera: &CameraConfig,
) -> Result<GrayImage, VisionError> {
    let filter = match filter {
        FilterPosition::Settled(f) => f,
        FilterPosition::Moving {
            actual_deg,
            commanded_deg,
        } => {
            return Err(VisionError::CameraObstructed {
                actual_deg,
                commanded_deg,
            })
        }
    };
    let background = pixel_intensity(scene.belt, &filter, light);
    let mut image = GrayImage::filled(camera.width_px, camera.height_px, background);
    let s = camera.mm_per_px;
    let x0 = scene.camera_x_mm - camera.width_px as f64 / 2.0 * s;
    let y0 = -(camera.height_px as f64) / 2.0 * s;
    for block in &scene.blocks {
        let value = pixel_intensity(block.reflectance, &filter, light);
        let half = block.size_mm / 2.0;
        let reach = half * std::f64::consts::SQRT_2;
        let (cx, cy) = block.center_mm;
        let (sin, cos) = block.rotation_deg.to_radians().sin_cos();
        let col_lo = (((cx - reach - x0) / s).floor().max(0.0)) as usize;
        let col_hi = (((cx + reach - x0) / s).ceil().min(camera.width_px as f64)).max(0.0) as usize;
        let row_lo = (((cy - reach - y0) / s).floor().max(0.0)) as usize;
        let row_hi =
            (((cy + reach - y0) / s).ceil().min(camera.height_px as f64)).max(0.0) as usize;
        for row in row_lo..row_hi {
            for col in col_lo..col_hi {
                let (px, py) = camera.pixel_to_mm(scene.camera_x_mm, col as f64, row as f64);
                let (dx, dy) = (px - cx, py - cy);
                let u = dx * cos + dy * sin;
                let v = -dx * sin + dy * cos;
                if u.abs() <= half && v.abs() <= half {
                    image.set(col, row, value);
                }
            }
        }
    }
    Ok(image)
}

/// Named contrast-find configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisionProcess {
    pub name: String,
    /// Required margin of region mean over background intensity.
    pub find_threshold_delta: f64,
    pub min_area_px: usize,
    pub max_area_px: usize,
    /// Pixels brighter than background by more than this are foreground.
    pub segmentation_floor: f64,
}

impl Default for VisionProcess {
    fn default() -> Self {
        VisionProcess {
            name: String::new(),
            find_threshold_delta: 0.15,
            min_area_px: 1600,
            max_area_px: 12800,
            segmentation_floor: 0.02,
        }
    }
}

impl VisionProcess {
    pub fn named(name: &str) -> Self {
        VisionProcess {
            name: name.to_string(),
            ..VisionProcess::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.find_threshold_delta > 0.0 && self.find_threshold_delta < 1.0) {
            return Err(ConfigError::new(format!(
                "vision process {}: find_threshold_delta must be in (0,1)",
                self.name
            )));
        }
        if self.min_area_px > self.max_area_px {
            return Err(ConfigError::new(format!(
                "vision process {}: min_area_px exceeds max_area_px",
                self.name
            )));
        }
        if !(self.segmentation_floor >= 0.0) {
            return Err(ConfigError::new(
                "vision segmentation_floor must be nonnegative",
            ));
        }
        Ok(())
    }
}

/// Offsets of the found part relative to the taught reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VisionRegister {
    pub found: bool,
    pub x_mm: f64,
    pub y_mm: f64,
    pub rz_deg: f64,
}

impl VisionRegister {
    pub fn offset(x_mm: f64, y_mm: f64, rz_deg: f64) -> Self {
        VisionRegister {
            found: true,
            x_mm,
            y_mm,
            rz_deg,
        }
    }
}

/// A connected foreground region.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub area_px: usize,
    pub mean_intensity: f64,
    /// Centroid in pixel coordinates (column, row).
    pub centroid_px: (f64, f64),
    pub rz_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FindReport {
    pub background: f64,
    pub regions: Vec<Region>,
    pub register: VisionRegister,
}

/// Intensity shared by the largest number of pixels.
pub fn background_mode(image: &GrayImage) -> f64 {
    const BINS: usize = 4096;
    let mut counts = vec![0usize; BINS];
    let mut sums = vec![0.0f64; BINS];
    for &v in image.pixels() {
        let bin = ((v * (BINS - 1) as f64).round() as usize).min(BINS - 1);
        counts[bin] += 1;
        sums[bin] += v;
    }
    let (bin, count) =
        counts.iter().enumerate().fold(
            (0, 0),
            |best, (i, &c)| if c > best.1 { (i, c) } else { best },
        );
    if count == 0 {
        0.0
    } else {
        sums[bin] / count as f64
    }
}

/// Segments pixels brighter than `background + floor` into 4-connected
/// regions.
pub fn find_regions(image: &GrayImage, background: f64, floor: f64) -> Vec<Region> {
    let (w, h) = (image.width(), image.height());
    let level = background + floor;
    let mut visited = vec![false; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if visited[start] || image.pixels[start] <= level {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let (mut n, mut sum_i, mut sx, mut sy, mut sxx, mut syy, mut sxy) =
            (0usize, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        while let Some(idx) = stack.pop() {
            let (col, row) = (idx % w, idx / w);
            let (x, y) = (col as f64, row as f64);
            n += 1;
            sum_i += image.pixels[idx];
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
            let mut visit = |j: usize| {
                if !visited[j] && image.pixels[j] > level {
                    visited[j] = true;
                    stack.push(j);
                }
            };
            if col > 0 {
                visit(idx - 1);
            }
            if col + 1 < w {
                visit(idx + 1);
            }
            if row > 0 {
                visit(idx - w);
            }
            if row + 1 < h {
                visit(idx + w);
            }
        }
        let nf = n as f64;
        let (cx, cy) = (sx / nf, sy / nf);
        let mu20 = sxx / nf - cx * cx;
        let mu02 = syy / nf - cy * cy;
        let mu11 = sxy / nf - cx * cy;
        regions.push(Region {
            area_px: n,
            mean_intensity: sum_i / nf,
            centroid_px: (cx, cy),
            rz_deg: principal_axis_deg(mu20, mu02, mu11),
        });
    }
    regions
}

/// Orientation of the major axis; zero when the blob is (nearly) isotropic.
fn principal_axis_deg(mu20: f64, mu02: f64, mu11: f64) -> f64 {
    let spread = mu20 + mu02;
    if spread <= 0.0 {
        return 0.0;
    }
    let anisotropy = ((mu20 - mu02).powi(2) + 4.0 * mu11 * mu11).sqrt() / spread;
    if anisotropy < 0.05 {
        0.0
    } else {
        0.5 * (2.0 * mu11).atan2(mu20 - mu02).to_degrees()
    }
}

/// Contrast find: returns the best qualifying region as offsets from the
/// image center, or `found = false`.
pub fn run_find(
    process: &VisionProcess,
    image: &GrayImage,
    camera: &CameraConfig,
) -> Result<VisionRegister, VisionError> {
    run_find_report(process, image, camera).map(|r| r.register)
}

pub fn run_find_report(
    process: &VisionProcess,
    image: &GrayImage,
    camera: &CameraConfig,
) -> Result<FindReport, VisionError> {
    if image.width() != camera.width_px || image.height() != camera.height_px {
        return Err(VisionError::DimensionMismatch {
            got_w: image.width(),
            got_h: image.height(),
            want_w: camera.width_px,
            want_h: camera.height_px,
        });
    }
    let background = background_mode(image);
    let regions = find_regions(image, background, process.segmentation_floor);
    let mut qualifying: Vec<&Region> = regions
        .iter()
        .filter(|r| {
            r.mean_intensity - background >= process.find_threshold_delta
                && (process.min_area_px..=process.max_area_px).contains(&r.area_px)
        })
        .collect();
    qualifying.sort_by(|a, b| {
        b.area_px
            .cmp(&a.area_px)
            .then(a.centroid_px.0.total_cmp(&b.centroid_px.0))
            .then(a.centroid_px.1.total_cmp(&b.centroid_px.1))
    });
    let register = match qualifying.as_slice() {
        [] => VisionRegister::default(),
        [best, rest @ ..] => {
            let ties = rest
                .iter()
                .take_while(|r| r.area_px == best.area_px && r.centroid_px == best.centroid_px)
                .count();
            if ties > 0 {
                return Err(VisionError::AmbiguousScene {
                    count: ties + 1,
                    area_px: best.area_px,
                });
            }
            let (x_mm, y_mm) = camera.pixel_to_offset(best.centroid_px.0, best.centroid_px.1);
            VisionRegister::offset(x_mm, y_mm, best.rz_deg)
        }
    };
    Ok(FindReport {
        background,
        regions,
        register,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::Channel;
    use crate::optics::OpticsParams;

    fn scene_with(blocks: Vec<SceneBlock>) -> Scene {
        Scene {
            belt: OpticsParams::default().belt,
            camera_x_mm: 580.0,
            blocks,
        }
    }

    fn block(refl: Rgb, x: f64, y: f64) -> SceneBlock {
        SceneBlock {
            reflectance: refl,
            center_mm: (x, y),
            size_mm: 40.0,
            rotation_deg: 0.0,
        }
    }

    fn lit(channel: Channel) -> (FilterPosition, LightSpec) {
        let p = OpticsParams::default();
        (
            FilterPosition::Settled(p.filter_for(channel)),
            p.led_for(channel),
        )
    }

    #[test]
    fn empty_belt_renders_uniform_background() {
        let cam = CameraConfig::default();
        let (f, l) = lit(Channel::Red);
        let img = render(&scene_with(vec![]), f, &l, &cam).unwrap();
        // 0.05 * (1.1*0.85 + 0.1*0.10 + 0.1*0.08)
        let expected = 0.05 * (1.1 * 0.85 + 0.1 * 0.10 + 0.1 * 0.08);
        assert!(img.pixels().iter().all(|&v| (v - expected).abs() < 1e-12));
        assert!((expected - 0.04765).abs() < 1e-12);
    }

    #[test]
    fn centered_block_is_an_80px_square() {
        let cam = CameraConfig::default();
        let p = OpticsParams::default();
        let (f, l) = lit(Channel::Red);
        let img = render(
            &scene_with(vec![block(p.red_block, 580.0, 0.0)]),
            f,
            &l,
            &cam,
        )
        .unwrap();
        let lit_px = img.pixels().iter().filter(|&&v| v > 0.5).count();
        assert_eq!(lit_px, 80 * 80);
        assert!((img.get(320, 240) - 0.74964).abs() < 1e-12);
        let found = run_find(&VisionProcess::named("REDSCAN"), &img, &cam).unwrap();
        assert!(found.found);
        assert!(found.x_mm.abs() < 1e-9 && found.y_mm.abs() < 1e-9);
        assert_eq!(found.rz_deg, 0.0);
    }

    #[test]
    fn moving_wheel_obstructs() {
        let cam = CameraConfig::default();
        let r = render(
            &scene_with(vec![]),
            FilterPosition::Moving {
                actual_deg: 120.0,
                commanded_deg: 180.0,
            },
            &LightSpec::DARK,
            &cam,
        );
        assert!(matches!(r, Err(VisionError::CameraObstructed { .. })));
    }

    #[test]
    fn empty_image_finds_nothing() {
        let cam = CameraConfig::default();
        let img = GrayImage::filled(640, 480, 0.03);
        assert!(
            !run_find(&VisionProcess::named("GRNSCAN"), &img, &cam)
                .unwrap()
                .found
        );
    }

    #[test]
    fn wrong_dimensions_rejected() {
        let cam = CameraConfig::default();
        let img = GrayImage::filled(10, 10, 0.0);
        assert!(matches!(
            run_find(&VisionProcess::named("X"), &img, &cam),
            Err(VisionError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn offsets_report_displacement_in_mm() {
        let cam = CameraConfig::default();
        let p = OpticsParams::default();
        let (f, l) = lit(Channel::Blue);
        let img = render(
            &scene_with(vec![block(p.blue_block, 592.0, -8.0)]),
            f,
            &l,
            &cam,
        )
        .unwrap();
        let vr = run_find(&VisionProcess::named("BLUSCAN"), &img, &cam).unwrap();
        assert!(vr.found);
        assert!((vr.x_mm - 12.0).abs() < 1e-9, "{vr:?}");
        assert!((vr.y_mm + 8.0).abs() < 1e-9, "{vr:?}");
    }

    #[test]
    fn elongated_blob_reports_its_axis() {
        let cam = CameraConfig::default();
        let mut img = GrayImage::filled(640, 480, 0.05);
        // 120 x 20 px bar along the image x axis
        for row in 230..250 {
            for col in 260..380 {
                img.set(col, row, 0.8);
            }
        }
        let vr = run_find(&VisionProcess::named("X"), &img, &cam).unwrap();
        assert!(vr.found);
        assert!(vr.rz_deg.abs() < 1e-9);
        // same bar turned to the image y axis
        let mut img = GrayImage::filled(640, 480, 0.05);
        for row in 180..300 {
            for col in 310..330 {
                img.set(col, row, 0.8);
            }
        }
        let vr = run_find(&VisionProcess::named("X"), &img, &cam).unwrap();
        assert!((vr.rz_deg.abs() - 90.0).abs() < 1e-9, "{}", vr.rz_deg);
    }

    #[test]
    fn largest_region_wins() {
        let cam = CameraConfig::default();
        let mut img = GrayImage::filled(640, 480, 0.05);
        let mut fill = |c0: usize, r0: usize, side: usize| {
            for row in r0..r0 + side {
                for col in c0..c0 + side {
                    img.set(col, row, 0.8);
                }
            }
        };
        fill(10, 10, 50);
        fill(400, 300, 70);
        let report = run_find_report(&VisionProcess::named("X"), &img, &cam).unwrap();
        assert_eq!(report.regions.len(), 2);
        let (x, _) = cam.pixel_to_offset(434.5, 334.5);
        assert!((report.register.x_mm - x).abs() < 1e-9);
    }

    #[test]
    fn equal_regions_break_ties_on_x_then_y() {
        let cam = CameraConfig::default();
        let mut img = GrayImage::filled(640, 480, 0.05);
        for (c0, r0) in [(300usize, 100usize), (100, 300), (100, 100)] {
            for row in r0..r0 + 45 {
                for col in c0..c0 + 45 {
                    img.set(col, row, 0.8);
                }
            }
        }
        let vr = run_find(&VisionProcess::named("X"), &img, &cam).unwrap();
        let (x, y) = cam.pixel_to_offset(122.0, 122.0);
        assert!((vr.x_mm - x).abs() < 1e-9 && (vr.y_mm - y).abs() < 1e-9);
    }

    #[test]
    fn concentric_equal_regions_are_ambiguous() {
        let cam = CameraConfig::default();
        let mut img = GrayImage::filled(640, 480, 0.05);
        // 10x10 ring of width 1 (36 px) around a 6x6 block (36 px), same centroid
        for row in 200..210 {
            for col in 300..310 {
                let ring = row == 200 || row == 209 || col == 300 || col == 309;
                let core = (202..208).contains(&row) && (302..308).contains(&col);
                if ring || core {
                    img.set(col, row, 0.8);
                }
            }
        }
        let process = VisionProcess {
            min_area_px: 10,
            ..VisionProcess::named("X")
        };
        assert!(matches!(
            run_find(&process, &img, &cam),
            Err(VisionError::AmbiguousScene {
                count: 2,
                area_px: 36
            })
        ));
    }

    #[test]
    fn pgm_header_and_size() {
        let img = GrayImage::filled(4, 3, 1.0);
        let pgm = img.to_pgm();
        assert!(pgm.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(pgm.len(), b"P5\n4 3\n255\n".len() + 12);
        assert_eq!(*pgm.last().unwrap(), 255);
    }
}
