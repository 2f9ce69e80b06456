use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::homography::Homography1D;
use super::AssociationError;
use crate::ClassId;

/// One measured junction between bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    /// Distance from the tip along the axis (mm).
    pub distance_mm: f64,
    /// Pointer radius at the junction (mm).
    pub radius_mm: f64,
}

/// Band labels on the tip side (`left`) and tail side (`right`) of a junction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SideLabels {
    pub left: Option<ClassId>,
    pub right: Option<ClassId>,
}

impl SideLabels {
    pub fn new(left: Option<ClassId>, right: Option<ClassId>) -> Self {
        Self { left, right }
    }

    pub fn swapped(self) -> Self {
        Self {
            left: self.right,
            right: self.left,
        }
    }
}

/// Measured band pattern of a pointer, tip to tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointerSpec {
    edges: Vec<EdgeSpec>,
    side_labels: Vec<SideLabels>,
    total_length_mm: f64,
}

impl PointerSpec {
    pub fn new(edges: Vec<EdgeSpec>, side_labels: Vec<SideLabels>, total_length_mm: f64) -> Result<Self, AssociationError> {
        let invalid = |m: String| Err(AssociationError::InvalidSpec(m));
        if edges.len() < 3 {
            return invalid(format!("need at least 3 edges, got {}", edges.len()));
        }
        if side_labels.len() != edges.len() {
            return invalid(format!(
                "{} side-label pairs for {} edges",
                side_labels.len(),
                edges.len()
            ));
        }
        if !(edges[0].distance_mm > 0.0) {
            return invalid("first edge must lie beyond the tip".into());
        }
        for w in edges.windows(2) {
            if !(w[1].distance_mm > w[0].distance_mm) {
                return invalid("edge distances must be strictly increasing".into());
            }
        }
        if !(edges.last().unwrap().distance_mm <= total_length_mm) {
            return invalid("last edge lies beyond the pointer length".into());
        }
        if let Some(e) = edges.iter().find(|e| !(e.radius_mm > 0.0) || !e.radius_mm.is_finite()) {
            return invalid(format!("edge radius must be positive (got {})", e.radius_mm));
        }
        for (i, s) in side_labels.iter().enumerate() {
            if s.left == s.right {
                return invalid(format!("edge {i} separates two bands with the same label"));
            }
        }
        for (i, w) in side_labels.windows(2).enumerate() {
            if w[0].right != w[1].left {
                return invalid(format!("bands between edges {i} and {} disagree", i + 1));
            }
        }
        let spec = Self {
            edges,
            side_labels,
            total_length_mm,
        };
        if !spec.distinct_from_reversal() {
            return invalid("pattern cannot be told apart from its reversal".into());
        }
        Ok(spec)
    }

    /// Build from band-level data: `band_labels` has one entry per band
    /// (edges + 1), and diameters are halved to radii.
    pub fn from_bands(
        distances_mm: &[f64],
        diameters_mm: &[f64],
        band_labels: &[Option<ClassId>],
        total_length_mm: f64,
    ) -> Result<Self, AssociationError> {
        if diameters_mm.len() != distances_mm.len() || band_labels.len() != distances_mm.len() + 1 {
            return Err(AssociationError::InvalidSpec(format!(
                "{} distances, {} diameters and {} band labels are inconsistent",
                distances_mm.len(),
                diameters_mm.len(),
                band_labels.len()
            )));
        }
        let edges = distances_mm
            .iter()
            .zip(diameters_mm)
            .map(|(&b, &d)| EdgeSpec {
                distance_mm: b,
                radius_mm: d / 2.0,
            })
            .collect();
        let sides = band_labels
            .windows(2)
            .map(|w| SideLabels::new(w[0], w[1]))
            .collect();
        Self::new(edges, sides, total_length_mm)
    }

    pub fn edges(&self) -> &[EdgeSpec] {
        &self.edges
    }

    pub fn side_labels(&self) -> &[SideLabels] {
        &self.side_labels
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn total_length_mm(&self) -> f64 {
        self.total_length_mm
    }

    /// Labels of the `edges + 1` bands, tip to tail.
    pub fn band_labels(&self) -> Vec<Option<ClassId>> {
        std::iter::once(self.side_labels[0].left)
            .chain(self.side_labels.iter().map(|s| s.right))
            .collect()
    }

    /// Band label at axial distance `b` (mm); `None` beyond the ends.
    pub fn band_at(&self, b: f64) -> Option<Option<ClassId>> {
        if !(0.0..=self.total_length_mm).contains(&b) {
            return None;
        }
        let idx = self.edges.partition_point(|e| e.distance_mm <= b);
        Some(self.band_labels()[idx])
    }

    /// Radius at axial distance `b`: piecewise linear between edges, constant beyond.
    pub fn radius_at(&self, b: f64) -> f64 {
        let first = self.edges[0];
        let last = *self.edges.last().unwrap();
        if b <= first.distance_mm {
            return first.radius_mm;
        }
        if b >= last.distance_mm {
            return last.radius_mm;
        }
        let i = self.edges.partition_point(|e| e.distance_mm <= b);
        let (a, c) = (self.edges[i - 1], self.edges[i]);
        let f = (b - a.distance_mm) / (c.distance_mm - a.distance_mm);
        a.radius_mm + f * (c.radius_mm - a.radius_mm)
    }

    /// Unordered pairs of labels that meet at some junction.
    pub fn adjacent_pairs(&self) -> BTreeSet<(ClassId, ClassId)> {
        self.side_labels
            .iter()
            .filter_map(|s| match (s.left, s.right) {
                (Some(a), Some(b)) if a != b => Some((a.min(b), a.max(b))),
                _ => None,
            })
            .collect()
    }

    /// Labels of the reversed pattern, listed tip-to-tail of the reversed pointer.
    pub fn reversed_side_labels(&self) -> Vec<SideLabels> {
        self.side_labels.iter().rev().map(|s| s.swapped()).collect()
    }

    fn distinct_from_reversal(&self) -> bool {
        if self.reversed_side_labels() != self.side_labels {
            return true;
        }
        // Same colors both ways: require the edge positions to differ
        // projectively from their mirror image. Four points always share
        // their cross ratio with the mirrored four, so five are needed.
        let n = self.edges.len();
        if n < 5 {
            return false;
        }
        let b: Vec<f64> = self.edges.iter().map(|e| e.distance_mm).collect();
        let mirrored: Vec<f64> = b.iter().rev().map(|x| self.total_length_mm - x).collect();
        let pairs = [(b[0], mirrored[0]), (b[1], mirrored[1]), (b[n - 1], mirrored[n - 1])];
        match Homography1D::fit(pairs) {
            Ok(h) => (0..n).any(|i| (h.apply(b[i]) - mirrored[i]).abs() > 1e-6 * self.total_length_mm),
            Err(_) => true,
        }
    }
}
