//! Commands behind the `bandtrack` binary: color calibration, single-frame
//! probing, sequence tracking into point clouds, and synthetic evaluation.
//!
//! Every failure maps to a [`CliError`] whose [`exit_code`](CliError::exit_code)
//! names the pipeline stage that gave up.

mod calibrate;
mod cloud;
mod config;
mod eval;
mod pipeline;
mod probe;
mod track;

pub use calibrate::{cmd_calibrate, CalibrationSummary, ClassSummary, CALIBRATION_MIN_SATURATION};
pub use cloud::{filter_point_cloud, write_ply, CloudPoint, PointCloud, MAD_FACTOR, MIN_FILTER_POINTS};
pub use config::{Config, PathsConfig, PointerConfig, PoseConfig};
pub use eval::{cmd_eval, first_principal_component, run_sweep, write_report, CellReport, EvalMode, SweepConfig};
pub use pipeline::{locate_in_image, locate_in_points, load_color_model, noisy_points_detection, MIN_EDGES};
pub use probe::{cmd_probe, PoseRecord};
pub use track::{cmd_track, list_frames, track_frames, FrameRecord, TrackOutput};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::association::AssociationError;
use crate::color_model::ColorModelError;
use crate::detection::DetectionError;
use crate::imaging::ImagingError;
use crate::pose::PoseError;
use crate::synthetic::SyntheticError;

pub const EXIT_GENERIC: i32 = 1;
pub const EXIT_POINTER_NOT_FOUND: i32 = 2;
pub const EXIT_INSUFFICIENT_EDGES: i32 = 3;
pub const EXIT_NO_ASSOCIATION: i32 = 4;
pub const EXIT_POSE: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImagingError },
    #[error("config: {0}")]
    Config(String),
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("calibration: {0}")]
    Calibration(#[from] ColorModelError),
    #[error("detection: {0}")]
    Detection(#[from] DetectionError),
    #[error("detection: found {0} junctions, need at least {MIN_EDGES}")]
    InsufficientEdges(usize),
    #[error("association: {0}")]
    Association(#[from] AssociationError),
    #[error("pose: {0}")]
    Pose(#[from] PoseError),
    #[error("synthetic: {0}")]
    Synthetic(#[from] SyntheticError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn image(path: &Path, source: ImagingError) -> Self {
        Self::Image {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Detection(DetectionError::InsufficientEdges(_)) | Self::InsufficientEdges(_) => EXIT_INSUFFICIENT_EDGES,
            Self::Detection(DetectionError::InvalidParams(_) | DetectionError::Imaging(_)) => EXIT_GENERIC,
            Self::Detection(_) => EXIT_POINTER_NOT_FOUND,
            Self::Association(AssociationError::InsufficientMatches(_)) => EXIT_INSUFFICIENT_EDGES,
            Self::Association(AssociationError::InvalidSpec(_)) => EXIT_GENERIC,
            Self::Association(_) => EXIT_NO_ASSOCIATION,
            Self::Pose(PoseError::InsufficientCorrespondences(_)) => EXIT_INSUFFICIENT_EDGES,
            Self::Pose(_) => EXIT_POSE,
            _ => EXIT_GENERIC,
        }
    }

    /// Short stage name used in CSV failure rows.
    pub fn stage(&self) -> &'static str {
        match self.exit_code() {
            EXIT_POINTER_NOT_FOUND => "pointer-not-found",
            EXIT_INSUFFICIENT_EDGES => "insufficient-edges",
            EXIT_NO_ASSOCIATION => "no-association",
            EXIT_POSE => "pose-failure",
            _ => "error",
        }
    }
}
