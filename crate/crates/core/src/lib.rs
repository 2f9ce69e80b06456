//! Single-camera 3D tracking of a cylindrically symmetric pointer marked with
//! colored bands.
//!
//! The pipeline runs in four stages:
//!
//! 1. **Color model** ([`color_model`]): per-band hue densities calibrated from
//!    one annotated image.
//! 2. **Detection** ([`detection`]): two-pass colored-region detection and
//!    extraction of sub-pixel contour point pairs at band junctions.
//! 3. **Association** ([`association`]): label alignment by dynamic
//!    programming, then RANSAC over 1D projective homographies.
//! 4. **Pose** ([`pose`]): linear depth initialization followed by
//!    Levenberg–Marquardt refinement of the 5-DoF pose.
//!
//! [`synthetic`] renders ground-truth scenes; [`cli`] wires everything into
//! the `bandtrack` command.

pub mod association;
pub mod cli;
pub mod color_model;
pub mod detection;
pub mod geometry;
pub mod imaging;
pub mod pose;
pub mod synthetic;

use serde::{Deserialize, Serialize};

/// Color class label; 0 is reserved for background/unlabeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u8);

impl std::fmt::Display for ClassId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
