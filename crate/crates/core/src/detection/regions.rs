use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DetectionError, DetectionParams};
use crate::color_model::ColorClassSet;
use crate::geometry::{sym2_eigen, Line2};
use crate::imaging::{connected_components, dilate_disk, erode_disk, BinaryImage, HueSatImage, Region};
use crate::ClassId;

/// Smallest moment-ellipse semi-axis (px).
const SEMI_AXIS_FLOOR: f64 = 0.5;

/// A connected region of one color class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRegion {
    pub label: ClassId,
    pub region: Region,
}

/// Moment ellipse of a region: semi-axes are twice the standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: Vector2<f64>,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Angle of the major axis from the image x-axis (rad).
    pub orientation: f64,
}

impl BandRegion {
    pub fn centroid(&self) -> Vector2<f64> {
        self.region.centroid
    }

    pub fn ellipse(&self) -> Ellipse {
        let (l1, l2, v) = sym2_eigen(&self.region.covariance);
        Ellipse {
            center: self.region.centroid,
            semi_major: (2.0 * l1.max(0.0).sqrt()).max(SEMI_AXIS_FLOOR),
            semi_minor: (2.0 * l2.max(0.0).sqrt()).max(SEMI_AXIS_FLOOR),
            orientation: v.y.atan2(v.x),
        }
    }

    /// The region dilated by `r` inside a `width × height` image. For a
    /// region that came out of erosion by `r` this is the morphological
    /// opening of its color component, i.e. the band minus noise.
    pub fn dilated(&self, r: usize, width: usize, height: usize) -> BandRegion {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &(x, y) in &self.region.pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let (ox, oy) = (x0.saturating_sub(r), y0.saturating_sub(r));
        let (ex, ey) = ((x1 + r).min(width - 1), (y1 + r).min(height - 1));
        let mut local = BinaryImage::new(ex - ox + 1, ey - oy + 1);
        for &(x, y) in &self.region.pixels {
            local.set(x - ox, y - oy, true);
        }
        let grown = dilate_disk(&local, r);
        let mut pixels = Vec::new();
        for y in 0..grown.height() {
            for x in 0..grown.width() {
                if grown.get(x, y) {
                    pixels.push((x + ox, y + oy));
                }
            }
        }
        BandRegion {
            label: self.label,
            region: Region::from_pixels(pixels),
        }
    }

    /// True when the region has pixels strictly on both sides of `line`.
    pub fn crosses(&self, line: &Line2) -> bool {
        let (mut neg, mut pos) = (false, false);
        for &(x, y) in &self.region.pixels {
            let d = line.signed_distance(Vector2::new(x as f64, y as f64));
            neg |= d < 0.0;
            pos |= d > 0.0;
            if neg && pos {
                return true;
            }
        }
        false
    }
}

/// Rectangle with center, unit major direction and half-extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vector2<f64>,
    pub major_dir: Vector2<f64>,
    pub half_major: f64,
    pub half_minor: f64,
}

impl OrientedBox {
    pub fn contains(&self, p: Vector2<f64>) -> bool {
        let d = p - self.center;
        let minor_dir = Vector2::new(-self.major_dir.y, self.major_dir.x);
        d.dot(&self.major_dir).abs() <= self.half_major && d.dot(&minor_dir).abs() <= self.half_minor
    }

    /// Pixel mask of the box.
    pub fn rasterize_into(&self, mask: &mut BinaryImage) {
        let r = self.half_major.hypot(self.half_minor);
        let (w, h) = (mask.width() as f64, mask.height() as f64);
        let x0 = (self.center.x - r).floor().max(0.0) as usize;
        let y0 = (self.center.y - r).floor().max(0.0) as usize;
        let x1 = (self.center.x + r).ceil().min(w - 1.0);
        let y1 = (self.center.y + r).ceil().min(h - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            return;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                if self.contains(Vector2::new(x as f64, y as f64)) {
                    mask.set(x, y, true);
                }
            }
        }
    }
}

/// Classify, erode, split into components and keep regions lying within
/// `2r + 4` px of a region of an adjacent color.
pub fn detect_band_regions(
    hs: &HueSatImage,
    colors: &ColorClassSet,
    adjacency: &BTreeSet<(ClassId, ClassId)>,
    s: f64,
    r: usize,
    roi: Option<&[OrientedBox]>,
) -> Vec<BandRegion> {
    let roi_mask = roi.map(|boxes| {
        let mut m = BinaryImage::new(hs.width, hs.height);
        for b in boxes {
            b.rasterize_into(&mut m);
        }
        m
    });
    let labels = colors.classify_image_within(hs, s, roi_mask.as_ref());
    let w = DetectionParams::adjacency_distance(r);

    let mut masks: BTreeMap<ClassId, BinaryImage> = BTreeMap::new();
    let mut candidates: Vec<BandRegion> = Vec::new();
    for label in colors.labels() {
        let eroded = erode_disk(&labels.mask_of(label), r);
        for region in connected_components(&eroded) {
            candidates.push(BandRegion { label, region });
        }
        masks.insert(label, eroded);
    }
    let reach: BTreeMap<ClassId, BinaryImage> = masks
        .iter()
        .filter(|(l, _)| adjacency.iter().any(|&(a, b)| a == **l || b == **l))
        .map(|(&l, m)| (l, dilate_disk(m, w)))
        .collect();
    let mut out = Vec::new();
    for cand in candidates {
        let partners: Vec<ClassId> = adjacency
            .iter()
            .filter_map(|&(a, b)| {
                if a == cand.label {
                    Some(b)
                } else if b == cand.label {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        let keep = partners.into_iter().filter_map(|p| reach.get(&p)).any(|m| {
            cand.region.pixels.iter().any(|&(x, y)| m.get(x, y))
        });
        if keep {
            out.push(cand);
        }
    }
    out
}

/// RANSAC line through region centroids, scored by the number of regions
/// the line crosses. Returns the line and the regions that either cross it
/// or whose centroid lies within `line_inlier_sigmas` standard deviations.
pub fn ransac_centroid_line(
    regions: &[BandRegion],
    params: &DetectionParams,
) -> Result<(Line2, Vec<BandRegion>), DetectionError> {
    let n = regions.len();
    if n < 2 {
        return Err(DetectionError::InsufficientRegions(n));
    }
    let all_pairs = n * (n - 1) / 2;
    let samples: Vec<(usize, usize)> = if all_pairs <= params.ransac_iterations {
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(params.ransac_seed);
        (0..params.ransac_iterations)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                (i.min(j), i.max(j))
            })
            .collect()
    };
    let mut best: Option<(usize, Line2)> = None;
    for (i, j) in samples {
        let Some(line) = Line2::through(regions[i].centroid(), regions[j].centroid()) else {
            continue;
        };
        if (regions[i].centroid() - regions[j].centroid()).norm() < 1e-9 {
            continue;
        }
        let count = regions.iter().filter(|r| r.crosses(&line)).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, line));
        }
    }
    let (_, line) = best.ok_or(DetectionError::DegenerateSample)?;
    let crossing: Vec<bool> = regions.iter().map(|r| r.crosses(&line)).collect();
    let dists: Vec<f64> = regions.iter().map(|r| line.signed_distance(r.centroid())).collect();
    let inlier_d: Vec<f64> = dists
        .iter()
        .zip(&crossing)
        .filter(|(_, &c)| c)
        .map(|(&d, _)| d)
        .collect();
    let sigma = if inlier_d.len() < 2 {
        params.r2 as f64
    } else {
        (inlier_d.iter().map(|d| d * d).sum::<f64>() / inlier_d.len() as f64).sqrt()
    };
    let limit = params.line_inlier_sigmas * sigma;
    let kept = regions
        .iter()
        .zip(crossing.iter().zip(&dists))
        .filter(|(_, (&c, &d))| c || d.abs() <= limit)
        .map(|(r, _)| r.clone())
        .collect();
    Ok((line, kept))
}

/// Oriented boxes from moment ellipses, scaled along the major and minor axes.
pub fn expand_bounding_boxes(regions: &[BandRegion], params: &DetectionParams) -> Vec<OrientedBox> {
    regions
        .iter()
        .map(|r| {
            let e = r.ellipse();
            OrientedBox {
                center: e.center,
                major_dir: Vector2::new(e.orientation.cos(), e.orientation.sin()),
                half_major: params.major_expand * e.semi_major,
                half_minor: params.minor_expand * e.semi_minor,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(label: u8, pixels: Vec<(usize, usize)>) -> BandRegion {
        BandRegion {
            label: ClassId(label),
            region: Region::from_pixels(pixels),
        }
    }

    fn rect(x0: usize, y0: usize, w: usize, h: usize) -> Vec<(usize, usize)> {
        (y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| (x, y))).collect()
    }

    #[test]
    fn two_regions_give_their_centroid_line() {
        let rs = vec![region(1, rect(0, 0, 5, 5)), region(2, rect(20, 10, 5, 5))];
        let (line, kept) = ransac_centroid_line(&rs, &DetectionParams::default()).unwrap();
        assert_eq!(kept.len(), 2);
        for r in &rs {
            assert!(line.signed_distance(r.centroid()).abs() < 1e-9);
        }
    }

    #[test]
    fn distractor_off_axis_is_dropped() {
        let mut rs: Vec<_> = (0..5).map(|i| region(1 + (i % 2) as u8, rect(10 + 12 * i, 20, 10, 7))).collect();
        rs.push(region(1, rect(40, 80, 6, 6)));
        let (line, kept) = ransac_centroid_line(&rs, &DetectionParams::default()).unwrap();
        assert_eq!(kept.len(), 5);
        assert!(kept.iter().all(|r| r.centroid().y < 30.0));
        assert!(line.dir.y.abs() < 1e-9);
    }

    #[test]
    fn too_few_or_coincident() {
        let one = vec![region(1, rect(0, 0, 3, 3))];
        assert!(matches!(
            ransac_centroid_line(&one, &DetectionParams::default()),
            Err(DetectionError::InsufficientRegions(1))
        ));
        let same = vec![region(1, rect(0, 0, 3, 3)), region(2, rect(0, 0, 3, 3))];
        assert!(matches!(
            ransac_centroid_line(&same, &DetectionParams::default()),
            Err(DetectionError::DegenerateSample)
        ));
    }

    #[test]
    fn rectangle_box_from_moments() {
        // Oracle: a w-pixel run has variance (w² - 1)/12.
        let r = region(1, rect(0, 0, 10, 4));
        let b = &expand_bounding_boxes(&[r], &DetectionParams::default())[0];
        let sx = ((100.0 - 1.0) / 12.0f64).sqrt();
        let sy = ((16.0 - 1.0) / 12.0f64).sqrt();
        assert!((b.half_major - 1.1 * 2.0 * sx).abs() < 1e-9);
        assert!((b.half_minor - 1.5 * 2.0 * sy).abs() < 1e-9);
        assert!(b.major_dir.x.abs() > 1.0 - 1e-12);
        assert!((b.center - Vector2::new(4.5, 1.5)).norm() < 1e-12);
    }

    #[test]
    fn single_pixel_box_uses_floor() {
        let r = region(1, vec![(3, 3)]);
        let b = &expand_bounding_boxes(&[r], &DetectionParams::default())[0];
        assert!((b.half_major - 1.1 * 0.5).abs() < 1e-12);
        assert!((b.half_minor - 1.5 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn circular_region_box() {
        let pix: Vec<_> = rect(0, 0, 41, 41)
            .into_iter()
            .filter(|&(x, y)| (x as f64 - 20.0).hypot(y as f64 - 20.0) <= 20.0)
            .collect();
        let b = &expand_bounding_boxes(&[region(1, pix)], &DetectionParams::default())[0];
        assert!((b.half_major / 1.1 - b.half_minor / 1.5).abs() < 1e-6);
        // A disk of radius R has σ = R/2, so the semi-axis is ≈ R.
        assert!((b.half_major / 1.1 - 20.0).abs() < 0.5);
    }

    #[test]
    fn box_rasterization() {
        let b = OrientedBox {
            center: Vector2::new(10.0, 10.0),
            major_dir: Vector2::new(1.0, 0.0),
            half_major: 3.0,
            half_minor: 1.0,
        };
        let mut m = BinaryImage::new(20, 20);
        b.rasterize_into(&mut m);
        assert_eq!(m.count_ones(), 7 * 3);
    }
}
