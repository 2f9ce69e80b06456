use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use super::{make_pair, BandRegion, DetectionError, DetectionParams, DetectionResult};
use crate::geometry::{sym2_eigen, Line2};
use crate::imaging::{connected_components, convolve_unit_sum, dilate_disk, BinaryImage, RealImage};
use crate::ClassId;

/// Orientation-selective kernel: a Gaussian in radius times a Gaussian in
/// the folded angle between the offset direction and `phi`, on a
/// `(2·radius + 1)²` window scaled to unit sum.
pub fn junction_kernel(phi: f64, sigma_d: f64, sigma_a: f64, radius: usize) -> Vec<Vec<f64>> {
    let r = radius as i64;
    let mut k: Vec<Vec<f64>> = (-r..=r)
        .map(|v| {
            (-r..=r)
                .map(|u| {
                    let (x, y) = (u as f64, v as f64);
                    let ang = if u == 0 && v == 0 {
                        0.0
                    } else {
                        let d = y.atan2(x) - phi;
                        d - PI * (d / PI).round()
                    };
                    (-(x * x + y * y) / (2.0 * sigma_d * sigma_d) - ang * ang / (2.0 * sigma_a * sigma_a)).exp()
                })
                .collect()
        })
        .collect();
    let sum: f64 = k.iter().flatten().sum();
    for row in &mut k {
        for v in row {
            *v /= sum;
        }
    }
    k
}

/// Junction images on a crop of the frame. Pixel `(x, y)` of each image
/// is frame pixel `(x + origin.0, y + origin.1)`.
#[derive(Debug, Clone)]
pub struct EdgeImages {
    pub origin: (usize, usize),
    /// Pixels within `e` of regions of both colors of an adjacent pair.
    pub ib1: BinaryImage,
    /// Normalized kernel response.
    pub response: RealImage,
    /// Thresholded response.
    pub ib2: BinaryImage,
    pub ib3: BinaryImage,
    /// Kernel orientation (rad).
    pub phi: f64,
}

impl EdgeImages {
    pub fn build(
        regions: &[BandRegion],
        adjacency: &BTreeSet<(ClassId, ClassId)>,
        params: &DetectionParams,
        width: usize,
        height: usize,
        centroid_line: &Line2,
    ) -> Result<Self, DetectionError> {
        if regions.is_empty() {
            return Err(DetectionError::NoEdges);
        }
        let e = params.halo();
        let kr = (3.0 * params.sigma_d()).round() as usize;
        let margin = e + kr + 1;
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for r in regions {
            let (a, b, c, d) = r.region.bbox();
            x0 = x0.min(a);
            y0 = y0.min(b);
            x1 = x1.max(c);
            y1 = y1.max(d);
        }
        let x0 = x0.saturating_sub(margin);
        let y0 = y0.saturating_sub(margin);
        let x1 = (x1 + margin).min(width - 1);
        let y1 = (y1 + margin).min(height - 1);
        let (cw, ch) = (x1 - x0 + 1, y1 - y0 + 1);

        let labels: BTreeSet<ClassId> = regions.iter().map(|r| r.label).collect();
        let grown = |label: ClassId| {
            let mut m = BinaryImage::new(cw, ch);
            for r in regions.iter().filter(|r| r.label == label) {
                for &(x, y) in &r.region.pixels {
                    m.set(x - x0, y - y0, true);
                }
            }
            dilate_disk(&m, e)
        };
        let grown: Vec<(ClassId, BinaryImage)> = labels.iter().map(|&l| (l, grown(l))).collect();
        let find = |l: ClassId| grown.iter().find(|(g, _)| *g == l).map(|(_, m)| m);
        let mut ib1 = BinaryImage::new(cw, ch);
        for &(a, b) in adjacency {
            if let (Some(ma), Some(mb)) = (find(a), find(b)) {
                ib1.or_assign(&ma.and(mb));
            }
        }
        if ib1.count_ones() == 0 {
            return Err(DetectionError::NoEdges);
        }

        let phi = second_component_angle(&ib1).unwrap_or_else(|| {
            let n = centroid_line.normal();
            n.y.atan2(n.x)
        });
        let kernel = junction_kernel(phi, params.sigma_d(), params.sigma_a(), kr);
        let response = convolve_unit_sum(&ib1, &kernel)?;
        let ib2 = response.threshold(params.binarize_threshold);
        let ib3 = ib1.and(&ib2);
        Ok(Self {
            origin: (x0, y0),
            ib1,
            response,
            ib2,
            ib3,
            phi,
        })
    }

    fn frame(&self, x: usize, y: usize) -> Vector2<f64> {
        Vector2::new((x + self.origin.0) as f64, (y + self.origin.1) as f64)
    }

    /// Centroid of the I_b3 pixels in the 3×3 neighborhood of `(x, y)`.
    fn subpixel(&self, x: usize, y: usize) -> Vector2<f64> {
        let mut sum = Vector2::zeros();
        let mut n = 0.0;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if self.ib3.get_signed(nx, ny) {
                    sum += self.frame(nx as usize, ny as usize);
                    n += 1.0;
                }
            }
        }
        sum / n
    }
}

/// Angle of the minor principal axis of the set pixels, or `None` when the
/// spread is isotropic within 1%.
fn second_component_angle(b: &BinaryImage) -> Option<f64> {
    let pts: Vec<Vector2<f64>> = b.ones().map(|(x, y)| Vector2::new(x as f64, y as f64)).collect();
    let n = pts.len() as f64;
    let c = pts.iter().sum::<Vector2<f64>>() / n;
    let mut cov = Matrix2::zeros();
    for p in &pts {
        let d = p - c;
        cov += d * d.transpose();
    }
    let (l1, l2, major) = sym2_eigen(&(cov / n));
    if l1 <= 0.0 || (l1 - l2) <= 0.01 * l1 {
        return None;
    }
    Some(major.x.atan2(-major.y))
}

struct Candidate {
    neg: (usize, usize),
    pos: (usize, usize),
}

/// Contour point pairs from the junction images: one candidate per
/// connected component of I_b2, then the separation, mutual-nearest-neighbor
/// and 5σ filters. Labels are left undefined.
pub fn extract_edge_pairs(images: &EdgeImages, params: &DetectionParams) -> Result<DetectionResult, DetectionError> {
    let l1 = Line2::fit(images.ib3.ones().map(|(x, y)| images.frame(x, y))).ok_or(DetectionError::NoEdges)?;
    let e = params.halo() as f64;

    let mut cands = Vec::new();
    for comp in connected_components(&images.ib2) {
        let mut neg: Option<((usize, usize), f64)> = None;
        let mut pos: Option<((usize, usize), f64)> = None;
        for &(x, y) in &comp.pixels {
            if !images.ib3.get(x, y) {
                continue;
            }
            let d = l1.signed_distance(images.frame(x, y));
            if d < 0.0 && neg.is_none_or(|(_, b)| d < b) {
                neg = Some(((x, y), d));
            }
            if d > 0.0 && pos.is_none_or(|(_, b)| d > b) {
                pos = Some(((x, y), d));
            }
        }
        if let (Some((n, _)), Some((p, _))) = (neg, pos) {
            cands.push(Candidate { neg: n, pos: p });
        }
    }
    let sep = |c: &Candidate| (images.frame(c.pos.0, c.pos.1) - images.frame(c.neg.0, c.neg.1)).norm();
    cands.retain(|c| sep(c) >= e);

    let seps: Vec<f64> = cands.iter().map(sep).collect();
    let n = seps.len() as f64;
    let mean = seps.iter().sum::<f64>() / n.max(1.0);
    let std = (seps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n.max(1.0)).sqrt();
    let along_neg: Vec<f64> = cands.iter().map(|c| l1.coordinate(images.frame(c.neg.0, c.neg.1))).collect();
    let along_pos: Vec<f64> = cands.iter().map(|c| l1.coordinate(images.frame(c.pos.0, c.pos.1))).collect();
    let nearest = |x: f64, set: &[f64]| {
        let mut best = 0;
        for (k, &y) in set.iter().enumerate() {
            if (x - y).abs() < (x - set[best]).abs() {
                best = k;
            }
        }
        best
    };
    let mut pairs = Vec::new();
    for (k, c) in cands.iter().enumerate() {
        if nearest(along_neg[k], &along_pos) != k || nearest(along_pos[k], &along_neg) != k {
            continue;
        }
        if (seps[k] - mean).abs() > params.pair_separation_sigmas * std {
            continue;
        }
        pairs.push([images.subpixel(c.neg.0, c.neg.1), images.subpixel(c.pos.0, c.pos.1)]);
    }
    if pairs.len() < 2 {
        return Err(DetectionError::InsufficientEdges(pairs.len()));
    }
    let l2 = Line2::fit(pairs.iter().flat_map(|p| p.iter().copied())).ok_or(DetectionError::NoEdges)?;
    let mut edges: Vec<_> = pairs.iter().map(|p| make_pair(&l2, p[0], p[1], None, None)).collect();
    edges.sort_by(|a, b| a.axis_coordinate.total_cmp(&b.axis_coordinate));
    Ok(DetectionResult {
        edges,
        l2,
        l1,
        pass1_regions: Vec::new(),
        pass2_regions: Vec::new(),
    })
}

/// Side labels for each pair: the label of the region, clipped between the
/// neighboring pairs' cut lines, whose centroid along L₂ is closest to the
/// pair. Regions not crossing L₂ are ignored.
pub fn label_edge_pairs(result: &mut DetectionResult, regions: &[BandRegion]) {
    let l2 = result.l2;
    let crossing: Vec<&BandRegion> = regions.iter().filter(|r| r.crosses(&l2)).collect();
    // Cut k: the visible junction arc, a half ellipse over the chord
    // `p_a p_b` with apex `bulge` along L₂; straight beyond the chord ends.
    struct Cut {
        mid: Vector2<f64>,
        normal: Vector2<f64>,
        chord: Vector2<f64>,
        half: f64,
        bulge: f64,
    }
    let cuts: Vec<Cut> = result
        .edges
        .iter()
        .map(|e| {
            let along = e.p_b - e.p_a;
            let half = along.norm() / 2.0;
            let mut normal = Vector2::new(along.y, -along.x);
            if normal.norm() < 1e-12 {
                normal = l2.dir;
            }
            normal = normal.normalize();
            if normal.dot(&l2.dir) < 0.0 {
                normal = -normal;
            }
            let chord = if half > 0.0 { along / (2.0 * half) } else { l2.normal() };
            Cut {
                mid: e.midpoint(),
                normal,
                chord,
                half,
                bulge: e.bulge,
            }
        })
        .collect();
    let side = |k: usize, p: Vector2<f64>| {
        let c = &cuts[k];
        let q = p - c.mid;
        let w = if c.half > 0.0 { q.dot(&c.chord) / c.half } else { 1.0 };
        q.dot(&c.normal) - c.bulge * (1.0 - w * w).max(0.0).sqrt()
    };
    let count = result.edges.len();

    let best_label = |k: usize, left: bool| -> Option<(ClassId, f64)> {
        let t = result.edges[k].axis_coordinate;
        let mut best: Option<(ClassId, f64)> = None;
        for r in &crossing {
            let mut sum = 0.0;
            let mut n = 0usize;
            for &(x, y) in &r.region.pixels {
                let p = Vector2::new(x as f64, y as f64);
                let inside = if left {
                    side(k, p) < 0.0 && (k == 0 || side(k - 1, p) > 0.0)
                } else {
                    side(k, p) > 0.0 && (k + 1 == count || side(k + 1, p) < 0.0)
                };
                if inside {
                    sum += l2.coordinate(p);
                    n += 1;
                }
            }
            if n == 0 {
                continue;
            }
            let dist = (sum / n as f64 - t).abs();
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((r.label, dist));
            }
        }
        best
    };
    let labels: Vec<(Option<(ClassId, f64)>, Option<(ClassId, f64)>)> =
        (0..count).map(|k| (best_label(k, true), best_label(k, false))).collect();
    for (edge, (left, right)) in result.edges.iter_mut().zip(labels) {
        let (mut l, mut r) = (left.map(|v| v.0), right.map(|v| v.0));
        if let (Some((a, da)), Some((b, db))) = (left, right) {
            if a == b {
                if da <= db {
                    r = None;
                } else {
                    l = None;
                }
            }
        }
        edge.left_label = l;
        edge.right_label = r;
    }
}
