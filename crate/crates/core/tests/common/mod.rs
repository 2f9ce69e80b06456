#![allow(dead_code)]

use std::sync::OnceLock;

use bandtrack::color_model::ColorClassSet;
use bandtrack::detection::DetectionResult;
use bandtrack::imaging::RasterImage;
use bandtrack::synthetic::{self, GroundTruth, SceneSpec};

/// Color model calibrated once from the clean reference view.
pub fn colors() -> &'static ColorClassSet {
    static COLORS: OnceLock<ColorClassSet> = OnceLock::new();
    COLORS.get_or_init(|| synthetic::calibrated_colors(&synthetic::camera()).unwrap())
}

pub fn scene(depth_mm: f64, angle_deg: f64) -> SceneSpec {
    SceneSpec::new(synthetic::grid_pose(depth_mm, angle_deg), synthetic::pointer_spec())
}

pub fn render(scene: &SceneSpec) -> (RasterImage, GroundTruth) {
    synthetic::render(scene, &synthetic::camera(), synthetic::IMAGE_WIDTH, synthetic::IMAGE_HEIGHT).unwrap()
}

/// For each detected pair, the larger point error against the closest
/// ground-truth pair (either point order), with that pair's index.
pub fn pair_errors(result: &DetectionResult, truth: &GroundTruth) -> Vec<(usize, f64)> {
    result
        .edges
        .iter()
        .map(|e| {
            truth
                .points
                .iter()
                .enumerate()
                .map(|(k, g)| {
                    let straight = (g[0] - e.p_a).norm().max((g[1] - e.p_b).norm());
                    let crossed = (g[1] - e.p_a).norm().max((g[0] - e.p_b).norm());
                    (k, straight.min(crossed))
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
        })
        .collect()
}

pub fn rms(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}
