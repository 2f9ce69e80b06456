//! Matching detected band junctions to the measured pattern.
//!
//! Label sequences are aligned by dynamic programming (ordering constraint,
//! mismatches forbidden, free gaps), then RANSAC over triplets of aligned
//! pairs scores 1D projective homographies between image axis coordinates
//! and axial millimeters by their reciprocal-nearest-neighbor inliers.

mod dp;
mod homography;
mod ransac;
mod spec;

pub use dp::{align_labels_dp, label_match_score, Alignment, MAX_ALIGNMENTS};
pub use homography::Homography1D;
pub use ransac::{associate_ransac, count_inliers, Correspondence, MAX_TRIPLETS};
pub use spec::{EdgeSpec, PointerSpec, SideLabels};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssociationError {
    #[error("invalid pointer spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate sample")]
    DegenerateSample,
    #[error("no detected edge matches the pointer's label pattern")]
    NoAssociation,
    #[error("need at least 3 aligned edges, found {0}")]
    InsufficientMatches(usize),
}

/// Whether increasing image axis coordinate runs tip→tail (forward) or tail→tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Forward,
    Reversed,
}

impl Orientation {
    /// Spec labels as seen from the detected (increasing axis coordinate) side.
    pub fn oriented(self, s: SideLabels) -> SideLabels {
        match self {
            Orientation::Forward => s,
            Orientation::Reversed => s.swapped(),
        }
    }
}
