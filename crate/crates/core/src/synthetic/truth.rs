use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{SceneSpec, SyntheticError};
use crate::imaging::io::GrayImage;
use crate::pose::{CameraModel, PointerPose};

/// Exact image positions of the rendered junctions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Contour points `[j = −1, j = +1]` per edge, in distorted image pixels.
    pub points: Vec<[Vector2<f64>; 2]>,
    /// The same points before lens distortion.
    pub ideal_points: Vec<[Vector2<f64>; 2]>,
    /// Both points inside the image and not occluded.
    pub visible: Vec<bool>,
    /// Both points covered by occluder rectangles.
    pub occluded: Vec<bool>,
    pub pose: PointerPose,
    /// Band label of each pixel center (0 where no band shows).
    #[serde(skip)]
    pub band_mask: GrayImage,
}

impl GroundTruth {
    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }
}

/// Ideal-pixel contour points of every edge, computed in the camera frame:
/// the silhouette offset is `±r·(d × X₀)/‖d × X₀‖` with the camera at the
/// origin.
pub fn ground_truth_points(
    pose: &PointerPose,
    spec: &crate::association::PointerSpec,
    camera: &CameraModel,
) -> Result<Vec<[Vector2<f64>; 2]>, SyntheticError> {
    let r = camera.rotation();
    let tip = r * pose.tip + camera.translation();
    let dir = r * pose.direction;
    let k = camera.k();
    let pix = |x: Vector3<f64>| -> Result<Vector2<f64>, SyntheticError> {
        if !(x.z > 0.0) {
            return Err(SyntheticError::BehindCamera);
        }
        let u = k[(0, 0)] * x.x / x.z + k[(0, 1)] * x.y / x.z + k[(0, 2)];
        let v = k[(1, 1)] * x.y / x.z + k[(1, 2)];
        Ok(Vector2::new(u, v))
    };
    spec.edges()
        .iter()
        .map(|e| {
            let x0 = tip + dir * e.distance_mm;
            let n = dir.cross(&x0);
            let norm = n.norm();
            if !(norm > 1e-12 * x0.norm()) {
                return Err(SyntheticError::InvalidScene("pointer axis passes through the camera".into()));
            }
            let side = n * (e.radius_mm / norm);
            Ok([pix(x0 - side)?, pix(x0 + side)?])
        })
        .collect()
}

pub(super) fn build(
    scene: &SceneSpec,
    camera: &CameraModel,
    width: usize,
    height: usize,
    band_mask: GrayImage,
) -> Result<GroundTruth, SyntheticError> {
    let ideal_points = ground_truth_points(&scene.pose, &scene.spec, camera)?;
    let model = camera.distortion();
    let points: Vec<[Vector2<f64>; 2]> = ideal_points.iter().map(|p| p.map(|q| model.distort(q))).collect();
    let inside = |p: &Vector2<f64>| p.x >= 0.0 && p.y >= 0.0 && p.x <= (width - 1) as f64 && p.y <= (height - 1) as f64;
    let covered = |p: &Vector2<f64>| scene.occluders.iter().any(|o| o.contains(p.x, p.y));
    let occluded: Vec<bool> = points.iter().map(|p| p.iter().all(covered)).collect();
    let visible = points
        .iter()
        .zip(&occluded)
        .map(|(p, &o)| !o && p.iter().all(inside))
        .collect();
    Ok(GroundTruth {
        points,
        ideal_points,
        visible,
        occluded,
        pose: scene.pose,
        band_mask,
    })
}
