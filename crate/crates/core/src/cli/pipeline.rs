use std::path::Path;

use nalgebra::Vector2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{CliError, Config};
use crate::association::{align_labels_dp, associate_ransac, PointerSpec, SideLabels};
use crate::color_model::ColorClassSet;
use crate::detection::{detect_pointer, DetectionResult};
use crate::imaging::RasterImage;
use crate::pose::{estimate_pose, PoseEstimate};

/// Fewest junctions a pose can be estimated from.
pub const MIN_EDGES: usize = 3;

pub fn load_color_model(path: &Path) -> Result<ColorClassSet, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Detect, associate and estimate the pose in one distorted camera image.
pub fn locate_in_image(
    img: &RasterImage,
    colors: &ColorClassSet,
    config: &Config,
    spec: &PointerSpec,
) -> Result<PoseEstimate, CliError> {
    let detected = detect_pointer(img, colors, spec, &config.detection)?;
    let ideal = detected.undistorted(config.camera.distortion())?;
    locate_in_points(&ideal, config, spec)
}

/// Associate and estimate the pose from contour points already in ideal
/// (undistorted) pixels.
pub fn locate_in_points(result: &DetectionResult, config: &Config, spec: &PointerSpec) -> Result<PoseEstimate, CliError> {
    if result.edges.len() < MIN_EDGES {
        return Err(CliError::InsufficientEdges(result.edges.len()));
    }
    let labels = result.side_labels();
    let alignments = align_labels_dp(&labels, spec)?;
    let hypotheses = associate_ransac(&result.axis_coordinates(), &labels, spec, &alignments, config.association_seed)?;
    Ok(estimate_pose(result, &hypotheses, &config.camera, spec, &config.pose_options())?)
}

/// Contour point pairs (tip side first) with isotropic Gaussian noise of
/// `sigma` px added to every coordinate.
pub fn noisy_points_detection(
    pairs: &[[Vector2<f64>; 2]],
    labels: &[SideLabels],
    sigma: f64,
    rng: &mut impl Rng,
) -> Result<DetectionResult, CliError> {
    if pairs.len() < 2 {
        return Err(CliError::InsufficientEdges(pairs.len()));
    }
    let tip_to_tail = (pairs[pairs.len() - 1][0] + pairs[pairs.len() - 1][1]) - (pairs[0][0] + pairs[0][1]);
    let noisy: Vec<[Vector2<f64>; 2]> = if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).map_err(|e| CliError::Config(e.to_string()))?;
        pairs
            .iter()
            .map(|p| p.map(|q| q + Vector2::new(n.sample(rng), n.sample(rng))))
            .collect()
    } else {
        pairs.to_vec()
    };
    Ok(DetectionResult::from_point_pairs(&noisy, labels, tip_to_tail)?)
}
