use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::BinaryImage;

/// An 8-connected set of pixels with its first and second moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Pixel coordinates in discovery order.
    pub pixels: Vec<(usize, usize)>,
    pub centroid: Vector2<f64>,
    /// Central second moments `[[μxx, μxy], [μxy, μyy]]` normalized by area.
    pub covariance: Matrix2<f64>,
}

impl Region {
    pub fn from_pixels(pixels: Vec<(usize, usize)>) -> Self {
        assert!(!pixels.is_empty(), "region needs at least one pixel");
        let n = pixels.len() as f64;
        let (sx, sy) = pixels
            .iter()
            .fold((0.0, 0.0), |(ax, ay), &(x, y)| (ax + x as f64, ay + y as f64));
        let centroid = Vector2::new(sx / n, sy / n);
        let mut cov = Matrix2::zeros();
        for &(x, y) in &pixels {
            let d = Vector2::new(x as f64, y as f64) - centroid;
            cov += d * d.transpose();
        }
        cov /= n;
        Self {
            pixels,
            centroid,
            covariance: cov,
        }
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    /// Inclusive bounding box `(min_x, min_y, max_x, max_y)`.
    pub fn bbox(&self) -> (usize, usize, usize, usize) {
        self.pixels.iter().fold(
            (usize::MAX, usize::MAX, 0, 0),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }
}

const NEIGHBORS8: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// 8-connected components in row-major order of their first pixel.
pub fn connected_components(b: &BinaryImage) -> Vec<Region> {
    let w = b.width();
    let mut seen = vec![false; w * b.height()];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for (x, y) in b.ones() {
        if seen[y * w + x] {
            continue;
        }
        seen[y * w + x] = true;
        stack.push((x, y));
        let mut pixels = Vec::new();
        while let Some((cx, cy)) = stack.pop() {
            pixels.push((cx, cy));
            for (dx, dy) in NEIGHBORS8 {
                let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                if b.get_signed(nx, ny) {
                    let idx = ny as usize * w + nx as usize;
                    if !seen[idx] {
                        seen[idx] = true;
                        stack.push((nx as usize, ny as usize));
                    }
                }
            }
        }
        regions.push(Region::from_pixels(pixels));
    }
    regions
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{HashSet, VecDeque};

    /// Breadth-first labeling written independently of the stack-based version.
    fn flood_oracle(b: &BinaryImage) -> Vec<HashSet<(usize, usize)>> {
        let mut label = vec![usize::MAX; b.width() * b.height()];
        let mut out: Vec<HashSet<(usize, usize)>> = Vec::new();
        for y in 0..b.height() {
            for x in 0..b.width() {
                if !b.get(x, y) || label[y * b.width() + x] != usize::MAX {
                    continue;
                }
                let id = out.len();
                let mut set = HashSet::new();
                let mut q = VecDeque::from([(x, y)]);
                label[y * b.width() + x] = id;
                while let Some((cx, cy)) = q.pop_front() {
                    set.insert((cx, cy));
                    for ny in cy.saturating_sub(1)..=(cy + 1).min(b.height() - 1) {
                        for nx in cx.saturating_sub(1)..=(cx + 1).min(b.width() - 1) {
                            if b.get(nx, ny) && label[ny * b.width() + nx] == usize::MAX {
                                label[ny * b.width() + nx] = id;
                                q.push_back((nx, ny));
                            }
                        }
                    }
                }
                out.push(set);
            }
        }
        out
    }

    #[test]
    fn empty_image_has_no_components() {
        assert!(connected_components(&BinaryImage::new(8, 8)).is_empty());
    }

    #[test]
    fn diagonal_pixels_connect() {
        let b = BinaryImage::from_fn(4, 4, |x, y| (x, y) == (1, 1) || (x, y) == (2, 2));
        let cc = connected_components(&b);
        assert_eq!(cc.len(), 1);
        assert_eq!(cc[0].area(), 2);
    }

    #[test]
    fn isolated_blocks_have_block_center_centroids() {
        // 2x2 blocks every 4 pixels.
        let b = BinaryImage::from_fn(16, 12, |x, y| x % 4 < 2 && y % 4 < 2);
        let cc = connected_components(&b);
        let oracle = flood_oracle(&b);
        assert_eq!(cc.len(), oracle.len());
        assert_eq!(cc.len(), 12);
        for r in &cc {
            assert_eq!(r.area(), 4);
            let (x0, y0) = (r.bbox().0 as f64, r.bbox().1 as f64);
            assert!((r.centroid.x - (x0 + 0.5)).abs() < 1e-12);
            assert!((r.centroid.y - (y0 + 0.5)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn components_partition_set_pixels(
            bits in proptest::collection::vec(proptest::bool::weighted(0.4), 10 * 9)
        ) {
            let b = BinaryImage::from_bits(10, 9, bits).unwrap();
            let cc = connected_components(&b);
            let mut all = HashSet::new();
            for r in &cc {
                for p in &r.pixels {
                    prop_assert!(all.insert(*p), "pixel {:?} in two regions", p);
                    prop_assert!(b.get(p.0, p.1));
                }
            }
            prop_assert_eq!(all.len(), b.count_ones());
            let mut mine: Vec<Vec<(usize, usize)>> = cc
                .iter()
                .map(|r| { let mut v = r.pixels.clone(); v.sort(); v })
                .collect();
            let mut theirs: Vec<Vec<(usize, usize)>> = flood_oracle(&b)
                .into_iter()
                .map(|s| { let mut v: Vec<_> = s.into_iter().collect(); v.sort(); v })
                .collect();
            mine.sort();
            theirs.sort();
            prop_assert_eq!(mine, theirs);
        }
    }
}
