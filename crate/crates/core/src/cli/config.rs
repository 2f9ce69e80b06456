use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::association::PointerSpec;
use crate::detection::DetectionParams;
use crate::pose::{CameraModel, PoseOptions};
use crate::synthetic;
use crate::ClassId;

/// Everything the commands need besides the images themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub camera: CameraModel,
    pub pointer: PointerConfig,
    #[serde(default)]
    pub detection: DetectionParams,
    #[serde(default)]
    pub pose: PoseConfig,
    #[serde(default)]
    pub association_seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
}

/// Band measurements as taken off the physical pointer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointerConfig {
    /// Junction distances from the tip, tip first.
    pub edge_distances_mm: Vec<f64>,
    /// Pointer diameter at each junction.
    pub edge_diameters_mm: Vec<f64>,
    /// Band labels from tip to tail; `null` marks an undefined color.
    pub band_labels: Vec<Option<ClassId>>,
    #[serde(default)]
    pub label_names: BTreeMap<ClassId, String>,
    pub total_length_mm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseConfig {
    /// Reject poses whose reprojection rms exceeds this.
    #[serde(default)]
    pub max_rms_px: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathsConfig {
    #[serde(default)]
    pub color_model: Option<PathBuf>,
    #[serde(default)]
    pub output_prefix: Option<PathBuf>,
}

impl PointerConfig {
    pub fn to_spec(&self) -> Result<PointerSpec, CliError> {
        Ok(PointerSpec::from_bands(
            &self.edge_distances_mm,
            &self.edge_diameters_mm,
            &self.band_labels,
            self.total_length_mm,
        )?)
    }

    /// Labels that bands or names refer to.
    pub fn known_labels(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.band_labels.iter().flatten().copied().chain(self.label_names.keys().copied())
    }
}

impl Config {
    /// Reference camera and pointer used by the synthetic scenes.
    pub fn reference() -> Self {
        let spec = synthetic::pointer_spec();
        let names = [(1, "red"), (2, "green"), (3, "blue")];
        Self {
            camera: synthetic::camera(),
            pointer: PointerConfig {
                edge_distances_mm: spec.edges().iter().map(|e| e.distance_mm).collect(),
                edge_diameters_mm: spec.edges().iter().map(|e| 2.0 * e.radius_mm).collect(),
                band_labels: spec.band_labels(),
                label_names: names.iter().map(|&(l, n)| (ClassId(l), n.to_string())).collect(),
                total_length_mm: spec.total_length_mm(),
            },
            detection: DetectionParams::default(),
            pose: PoseConfig::default(),
            association_seed: 0,
            paths: PathsConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.pointer.to_spec()?;
        self.detection.validate()?;
        if let Some(limit) = self.pose.max_rms_px {
            if !(limit > 0.0) {
                return Err(CliError::Config("pose.max_rms_px must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn pose_options(&self) -> PoseOptions {
        PoseOptions {
            max_rms: self.pose.max_rms_px,
        }
    }
}
