//! Ground-truth scenes: a banded pointer rendered under a known camera and
//! pose, together with the exact image positions of its junction contour
//! points.

mod render;
mod truth;

pub use render::{gaussian_blur, render};
pub use truth::{ground_truth_points, GroundTruth};

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::PointerSpec;
use crate::color_model::{calibrate_colors, ColorClassSet, ColorModelError};
use crate::imaging::ImagingError;
use crate::pose::{CameraModel, PointerPose, PoseError};
use crate::ClassId;

pub const IMAGE_WIDTH: usize = 2448;
pub const IMAGE_HEIGHT: usize = 2048;
/// Subsamples per pixel side.
pub const SUPERSAMPLING: usize = 4;

/// Junction distances from the tip of the reference pointer (mm).
pub const POINTER_EDGES_MM: [f64; 10] = [28.0, 44.0, 68.0, 86.0, 116.0, 132.0, 158.0, 178.0, 212.0, 229.0];
pub const POINTER_LENGTH_MM: f64 = 251.0;
pub const POINTER_DIAMETER_MM: f64 = 6.0;
pub const POINTER_BANDS: [u8; 11] = [1, 2, 1, 2, 1, 3, 2, 1, 2, 1, 2];

pub const RED: [f32; 3] = [0.85, 0.15, 0.15];
pub const GREEN: [f32; 3] = [0.15, 0.7, 0.2];
pub const BLUE: [f32; 3] = [0.15, 0.25, 0.85];
pub const GRAY: [f32; 3] = [0.5, 0.5, 0.5];

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("pointer is not in front of the camera")]
    BehindCamera,
    #[error("empty sweep grid")]
    EmptyGrid,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    ColorModel(#[from] ColorModelError),
}

impl From<PoseError> for SyntheticError {
    fn from(e: PoseError) -> Self {
        match e {
            PoseError::BehindCamera => SyntheticError::BehindCamera,
            other => SyntheticError::InvalidScene(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandColor {
    pub label: ClassId,
    pub rgb: [f32; 3],
}

/// Axis-aligned image rectangle drawn in front of everything (px).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub rgb: [f32; 3],
}

impl Occluder {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Desaturated stretch of the pointer between two axial distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    pub from_mm: f64,
    pub to_mm: f64,
    /// Blend toward white: 0 leaves the band color, 1 is pure white.
    pub desaturation: f32,
}

/// Colored disk behind the pointer (px).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub center: [f64; 2],
    pub radius_px: f64,
    pub rgb: [f32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub pose: PointerPose,
    pub spec: PointerSpec,
    pub band_colors: Vec<BandColor>,
    /// Color of bands without a label.
    pub undefined_color: [f32; 3],
    pub background: [f32; 3],
    pub blur_sigma_px: f64,
    /// Per-channel Gaussian noise, in channel units.
    pub noise_sigma: f64,
    pub occluders: Vec<Occluder>,
    pub highlights: Vec<Highlight>,
    pub distractors: Vec<Distractor>,
    pub seed: u64,
}

impl SceneSpec {
    /// Clean scene with the reference colors on a gray background.
    pub fn new(pose: PointerPose, spec: PointerSpec) -> Self {
        Self {
            pose,
            spec,
            band_colors: default_band_colors(),
            undefined_color: [0.3, 0.3, 0.3],
            background: GRAY,
            blur_sigma_px: 0.0,
            noise_sigma: 0.0,
            occluders: Vec::new(),
            highlights: Vec::new(),
            distractors: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: String| Err(SyntheticError::InvalidScene(m));
        let color_ok = |c: &[f32; 3]| c.iter().all(|v| (0.0..=1.0).contains(v));
        if !(self.blur_sigma_px >= 0.0 && self.blur_sigma_px.is_finite()) {
            return bad(format!("blur sigma {} must be finite and non-negative", self.blur_sigma_px));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be finite and non-negative", self.noise_sigma));
        }
        let colors = self
            .band_colors
            .iter()
            .map(|b| &b.rgb)
            .chain([&self.undefined_color, &self.background])
            .chain(self.occluders.iter().map(|o| &o.rgb))
            .chain(self.distractors.iter().map(|d| &d.rgb));
        if !colors.into_iter().all(color_ok) {
            return bad("colors must lie in [0, 1]".into());
        }
        if self.highlights.iter().any(|h| !(0.0..=1.0).contains(&h.desaturation)) {
            return bad("highlight desaturation must lie in [0, 1]".into());
        }
        for label in self.spec.band_labels().into_iter().flatten() {
            if self.color_of(Some(label)).is_none() {
                return bad(format!("no color for band label {label}"));
            }
        }
        Ok(())
    }

    pub fn color_of(&self, label: Option<ClassId>) -> Option<[f32; 3]> {
        match label {
            None => Some(self.undefined_color),
            Some(l) => self.band_colors.iter().find(|b| b.label == l).map(|b| b.rgb),
        }
    }
}

pub fn default_band_colors() -> Vec<BandColor> {
    [RED, GREEN, BLUE]
        .into_iter()
        .enumerate()
        .map(|(i, rgb)| BandColor {
            label: ClassId(i as u8 + 1),
            rgb,
        })
        .collect()
}

/// The 251 mm, ten-junction reference pointer.
pub fn pointer_spec() -> PointerSpec {
    let labels: Vec<_> = POINTER_BANDS.iter().map(|&l| Some(ClassId(l))).collect();
    PointerSpec::from_bands(&POINTER_EDGES_MM, &[POINTER_DIAMETER_MM; 10], &labels, POINTER_LENGTH_MM)
        .expect("reference pointer is valid")
}

/// Camera for the 2448×2048 sensor at the world origin.
pub fn camera() -> CameraModel {
    let k = nalgebra::Matrix3::new(2400.0, 0.0, 1224.0, 0.0, 2400.0, 1024.0, 0.0, 0.0, 1.0);
    CameraModel::from_intrinsics(k).expect("reference camera is valid")
}

/// Sweep pose: tip at camera depth `depth_mm`, axis tilted `angle_deg` out
/// of the image plane (away from the camera) and turned 15° within it.
pub fn grid_pose(depth_mm: f64, angle_deg: f64) -> PointerPose {
    let a = angle_deg.to_radians();
    let turn = Rotation3::from_axis_angle(&Vector3::z_axis(), 15f64.to_radians());
    PointerPose::new(Vector3::new(-110.0, -30.0, depth_mm), turn * Vector3::new(a.cos(), 0.0, a.sin()))
}

/// Poses of a pointer whose tip traces a square of side `side_mm` once,
/// counterclockwise in the fronto-parallel plane at depth `depth_mm`.
///
/// The square is centered on the sweep tip position and the axis keeps the
/// 30° sweep orientation throughout.
pub fn square_trace(frames: usize, side_mm: f64, depth_mm: f64) -> Vec<PointerPose> {
    let base = grid_pose(depth_mm, 30.0);
    let h = side_mm / 2.0;
    (0..frames)
        .map(|i| {
            let s = 4.0 * i as f64 / frames as f64;
            let (edge, t) = ((s as usize).min(3), (s.fract() * 2.0 - 1.0) * h);
            let (x, y) = [(t, -h), (h, t), (-t, h), (-h, -t)][edge];
            PointerPose::new(base.tip + Vector3::new(x, y, 0.0), base.direction)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub depth_mm: f64,
    pub angle_deg: f64,
    pub scene: SceneSpec,
}

/// One scene per (depth, angle) cell, depth-major, with per-cell seeds
/// derived from `seed`.
pub fn sweep(
    depths_mm: &[f64],
    angles_deg: &[f64],
    template: &SceneSpec,
    seed: u64,
) -> Result<Vec<SweepCell>, SyntheticError> {
    if depths_mm.is_empty() || angles_deg.is_empty() {
        return Err(SyntheticError::EmptyGrid);
    }
    let mut cells = Vec::with_capacity(depths_mm.len() * angles_deg.len());
    for &depth_mm in depths_mm {
        for &angle_deg in angles_deg {
            let mut scene = template.clone();
            scene.pose = grid_pose(depth_mm, angle_deg);
            scene.seed = seed.wrapping_add((cells.len() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            cells.push(SweepCell {
                depth_mm,
                angle_deg,
                scene,
            });
        }
    }
    Ok(cells)
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Color model calibrated from a clean fronto-parallel rendering and its
/// band mask.
pub fn calibrated_colors(camera: &CameraModel) -> Result<ColorClassSet, SyntheticError> {
    calibrated_colors_like(camera, &SceneSpec::new(grid_pose(450.0, 0.0), pointer_spec()))
}

/// Color model calibrated from the fronto-parallel view at 450 mm, imaged
/// like `template` (colors, background, blur and noise; occluders,
/// highlights and distractors are dropped).
pub fn calibrated_colors_like(camera: &CameraModel, template: &SceneSpec) -> Result<ColorClassSet, SyntheticError> {
    let scene = SceneSpec {
        pose: grid_pose(450.0, 0.0),
        occluders: Vec::new(),
        highlights: Vec::new(),
        distractors: Vec::new(),
        ..template.clone()
    };
    let (img, truth) = render(&scene, camera, IMAGE_WIDTH, IMAGE_HEIGHT)?;
    Ok(calibrate_colors(&img, &truth.band_mask, 0.3)?)
}
