//! Two-pass colored-band detection and junction contour-point extraction.
//!
//! Pass 1 classifies pixels with a strict saturation threshold, erodes
//! strongly and keeps regions near regions of an adjacent color; a RANSAC
//! line through the region centroids rejects clutter and the survivors'
//! expanded moment ellipses bound the search for pass 2. Pass 2 repeats the
//! pipeline with a lenient threshold inside those boxes, then locates band
//! junctions with an orientation-selective filter and extracts one pair of
//! contour points per junction.

mod edges;
mod params;
mod refine;
mod regions;

pub use edges::{extract_edge_pairs, junction_kernel, label_edge_pairs, EdgeImages};
pub use params::DetectionParams;
pub use refine::refine_contour_points;
pub use regions::{detect_band_regions, expand_bounding_boxes, ransac_centroid_line, BandRegion, OrientedBox};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::{PointerSpec, SideLabels};
use crate::color_model::ColorClassSet;
use crate::geometry::Line2;
use crate::imaging::{rgb_to_hue_saturation, undistort_point, DistortionModel, ImagingError, RasterImage};
use crate::ClassId;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("pointer not found: no regions left after {0}")]
    PointerNotFound(&'static str),
    #[error("need at least 2 regions for a centroid line, got {0}")]
    InsufficientRegions(usize),
    #[error("region centroids do not define a line")]
    DegenerateSample,
    #[error("no junction pixels found")]
    NoEdges,
    #[error("found {0} junction point pairs, need at least 2")]
    InsufficientEdges(usize),
    #[error("invalid detection parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// The two contour points of one band junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePointPair {
    /// Point on the negative side of the axis line.
    pub p_a: Vector2<f64>,
    /// Point on the positive side of the axis line.
    pub p_b: Vector2<f64>,
    /// Band label toward decreasing axis coordinate.
    pub left_label: Option<ClassId>,
    /// Band label toward increasing axis coordinate.
    pub right_label: Option<ClassId>,
    /// Coordinate of the pair midpoint along L₂ (px).
    pub axis_coordinate: f64,
    /// Offset along L₂ of the visible junction arc's apex from the chord
    /// `p_a p_b` (px); zero when unknown.
    #[serde(default)]
    pub bulge: f64,
}

impl EdgePointPair {
    pub fn midpoint(&self) -> Vector2<f64> {
        (self.p_a + self.p_b) * 0.5
    }

    pub fn side_labels(&self) -> SideLabels {
        SideLabels::new(self.left_label, self.right_label)
    }
}

/// Output of detection: junction point pairs sorted along the axis line L₂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub edges: Vec<EdgePointPair>,
    /// Line through the pair points.
    pub l2: Line2,
    /// Line through the junction pixels of I_b3.
    pub l1: Line2,
    pub pass1_regions: Vec<BandRegion>,
    pub pass2_regions: Vec<BandRegion>,
}

impl DetectionResult {
    /// Build from bare point pairs, fitting L₂ to all points.
    ///
    /// `labels` are given tip-side first; `tip_to_tail` is any image
    /// direction roughly from tip to tail and fixes which side is "left".
    pub fn from_point_pairs(
        pairs: &[[Vector2<f64>; 2]],
        labels: &[SideLabels],
        tip_to_tail: Vector2<f64>,
    ) -> Result<Self, DetectionError> {
        assert_eq!(pairs.len(), labels.len());
        if pairs.len() < 2 {
            return Err(DetectionError::InsufficientEdges(pairs.len()));
        }
        let l2 = Line2::fit(pairs.iter().flat_map(|p| p.iter().copied())).ok_or(DetectionError::NoEdges)?;
        let flip = l2.dir.dot(&tip_to_tail) < 0.0;
        let edges = pairs
            .iter()
            .zip(labels)
            .map(|(p, s)| {
                let s = if flip { s.swapped() } else { *s };
                make_pair(&l2, p[0], p[1], s.left, s.right)
            })
            .collect();
        let mut out = Self {
            edges,
            l2,
            l1: l2,
            pass1_regions: Vec::new(),
            pass2_regions: Vec::new(),
        };
        out.sort_edges();
        Ok(out)
    }

    /// Side labels in axis order.
    pub fn side_labels(&self) -> Vec<SideLabels> {
        self.edges.iter().map(EdgePointPair::side_labels).collect()
    }

    pub fn axis_coordinates(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.axis_coordinate).collect()
    }

    /// Same result with every point mapped through the inverse lens
    /// distortion; L₂ is refit and axis coordinates recomputed. Edge order is
    /// kept unless undistortion reverses it.
    pub fn undistorted(&self, model: &DistortionModel) -> Result<Self, DetectionError> {
        if model.is_identity() {
            return Ok(self.clone());
        }
        let mut pts = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            pts.push([undistort_point(e.p_a, model)?, undistort_point(e.p_b, model)?]);
        }
        let l2 = Line2::fit(pts.iter().flat_map(|p| p.iter().copied())).ok_or(DetectionError::NoEdges)?;
        // Keep "left" meaning lower axis coordinate on the old line.
        let flip = l2.dir.dot(&self.l2.dir) < 0.0;
        let edges = self
            .edges
            .iter()
            .zip(&pts)
            .map(|(e, p)| {
                let s = if flip { e.side_labels().swapped() } else { e.side_labels() };
                EdgePointPair {
                    bulge: if flip { -e.bulge } else { e.bulge },
                    ..make_pair(&l2, p[0], p[1], s.left, s.right)
                }
            })
            .collect();
        let mut out = Self {
            edges,
            l2,
            l1: l2,
            pass1_regions: self.pass1_regions.clone(),
            pass2_regions: self.pass2_regions.clone(),
        };
        out.sort_edges();
        Ok(out)
    }

    fn sort_edges(&mut self) {
        self.edges.sort_by(|a, b| a.axis_coordinate.total_cmp(&b.axis_coordinate));
    }
}

/// Orders the two points by side of `l2` and measures the axis coordinate.
pub(crate) fn make_pair(
    l2: &Line2,
    p: Vector2<f64>,
    q: Vector2<f64>,
    left: Option<ClassId>,
    right: Option<ClassId>,
) -> EdgePointPair {
    let (p_a, p_b) = if l2.signed_distance(p) <= l2.signed_distance(q) {
        (p, q)
    } else {
        (q, p)
    };
    EdgePointPair {
        p_a,
        p_b,
        left_label: left,
        right_label: right,
        axis_coordinate: l2.coordinate((p_a + p_b) * 0.5),
        bulge: 0.0,
    }
}

/// Full two-pass detection on an RGB image.
pub fn detect_pointer(
    img: &RasterImage,
    colors: &ColorClassSet,
    spec: &PointerSpec,
    params: &DetectionParams,
) -> Result<DetectionResult, DetectionError> {
    params.validate()?;
    let hs = rgb_to_hue_saturation(img);
    let adjacency = spec.adjacent_pairs();

    let pass1 = detect_band_regions(&hs, colors, &adjacency, params.s1, params.r1, None);
    if pass1.is_empty() {
        return Err(DetectionError::PointerNotFound("pass-1 region detection"));
    }
    let (line1, pass1) = ransac_centroid_line(&pass1, params)?;
    let pass1 = line_survivors(pass1, "pass-1 centroid line")?;
    log::debug!("pass 1: {} regions along {:?}", pass1.len(), line1);
    // Boxes bound the bands themselves, not their eroded cores.
    let opened: Vec<BandRegion> = pass1.iter().map(|r| r.dilated(params.r1, hs.width, hs.height)).collect();
    let boxes = expand_bounding_boxes(&opened, params);

    let pass2 = detect_band_regions(&hs, colors, &adjacency, params.s2, params.r2, Some(&boxes));
    if pass2.is_empty() {
        return Err(DetectionError::PointerNotFound("pass-2 region detection"));
    }
    let (line2, pass2) = ransac_centroid_line(&pass2, params)?;
    let pass2 = line_survivors(pass2, "pass-2 centroid line")?;
    log::debug!("pass 2: {} regions", pass2.len());

    let images = EdgeImages::build(&pass2, &adjacency, params, hs.width, hs.height, &line2)?;
    let mut result = extract_edge_pairs(&images, params)?;
    refine_contour_points(&mut result, img, &hs, params);
    label_edge_pairs(&mut result, &pass2);
    result.pass1_regions = pass1;
    result.pass2_regions = pass2;
    Ok(result)
}

fn line_survivors(regions: Vec<BandRegion>, stage: &'static str) -> Result<Vec<BandRegion>, DetectionError> {
    if regions.is_empty() {
        Err(DetectionError::PointerNotFound(stage))
    } else {
        Ok(regions)
    }
}
