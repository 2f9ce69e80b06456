use std::fmt;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{locate_in_image, CliError, Config};
use crate::color_model::ColorClassSet;
use crate::imaging::io::read_ppm;
use crate::pose::PoseEstimate;

/// One located pointer, printed as a single line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub tip_mm: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub rms_px: f64,
    pub inliers: usize,
}

impl From<&PoseEstimate> for PoseRecord {
    fn from(e: &PoseEstimate) -> Self {
        Self {
            tip_mm: e.pose.tip,
            direction: e.pose.direction,
            rms_px: e.rms_reprojection,
            inliers: e.inlier_count(),
        }
    }
}

impl fmt::Display for PoseRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (t, d) = (&self.tip_mm, &self.direction);
        write!(
            f,
            "tip_mm {:.4} {:.4} {:.4} direction {:.6} {:.6} {:.6} rms_px {:.4} inliers {}",
            t.x, t.y, t.z, d.x, d.y, d.z, self.rms_px, self.inliers
        )
    }
}

/// Locate the pointer in one PPM frame.
pub fn cmd_probe(image: &Path, config: &Config, colors: &ColorClassSet) -> Result<PoseRecord, CliError> {
    let img = read_ppm(image).map_err(|e| CliError::image(image, e))?;
    let spec = config.pointer.to_spec()?;
    let est = locate_in_image(&img, colors, config, &spec)?;
    Ok(PoseRecord::from(&est))
}
