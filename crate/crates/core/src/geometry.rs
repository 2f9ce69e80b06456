//! Small 2D helpers shared by detection and association.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

/// Eigen-decomposition of a symmetric 2x2 matrix: `(λ_major, λ_minor, major unit vector)`.
pub fn sym2_eigen(m: &Matrix2<f64>) -> (f64, f64, Vector2<f64>) {
    let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    (mean + rad, mean - rad, Vector2::new(theta.cos(), theta.sin()))
}

/// Image line through `point` with unit direction `dir`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line2 {
    pub point: Vector2<f64>,
    pub dir: Vector2<f64>,
}

impl Line2 {
    /// Direction is normalized and flipped to point toward +x (or +y when vertical).
    pub fn new(point: Vector2<f64>, dir: Vector2<f64>) -> Option<Self> {
        let n = dir.norm();
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        let mut dir = dir / n;
        if dir.x < 0.0 || (dir.x == 0.0 && dir.y < 0.0) {
            dir = -dir;
        }
        Some(Self { point, dir })
    }

    pub fn through(a: Vector2<f64>, b: Vector2<f64>) -> Option<Self> {
        Self::new(a, b - a)
    }

    /// Total-least-squares fit; `None` for fewer than two distinct points.
    pub fn fit<I: IntoIterator<Item = Vector2<f64>>>(points: I) -> Option<Self> {
        let pts: Vec<Vector2<f64>> = points.into_iter().collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let c = pts.iter().sum::<Vector2<f64>>() / n;
        let mut scatter = Matrix2::zeros();
        for p in &pts {
            let d = p - c;
            scatter += d * d.transpose();
        }
        if scatter.trace() <= 0.0 {
            return None;
        }
        let (_, _, major) = sym2_eigen(&scatter);
        Self::new(c, major)
    }

    /// Unit normal, rotated +90° from `dir`.
    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(-self.dir.y, self.dir.x)
    }

    pub fn signed_distance(&self, p: Vector2<f64>) -> f64 {
        (p - self.point).dot(&self.normal())
    }

    /// Coordinate of the orthogonal projection of `p` along the line.
    pub fn coordinate(&self, p: Vector2<f64>) -> f64 {
        (p - self.point).dot(&self.dir)
    }

    pub fn at(&self, t: f64) -> Vector2<f64> {
        self.point + self.dir * t
    }

    pub fn project(&self, p: Vector2<f64>) -> Vector2<f64> {
        self.at(self.coordinate(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_diagonal() {
        let (l1, l2, v) = sym2_eigen(&Matrix2::new(4.0, 0.0, 0.0, 1.0));
        assert_eq!((l1, l2), (4.0, 1.0));
        assert!((v.x.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_of_rotated() {
        let t: f64 = 0.3;
        let r = Matrix2::new(t.cos(), -t.sin(), t.sin(), t.cos());
        let m = r * Matrix2::new(9.0, 0.0, 0.0, 2.0) * r.transpose();
        let (l1, l2, v) = sym2_eigen(&m);
        assert!((l1 - 9.0).abs() < 1e-12 && (l2 - 2.0).abs() < 1e-12);
        assert!((v.dot(&Vector2::new(t.cos(), t.sin())).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tls_fit_recovers_line() {
        let pts: Vec<_> = (0..10)
            .map(|i| Vector2::new(i as f64, 2.0 - 0.5 * i as f64))
            .collect();
        let l = Line2::fit(pts.iter().copied()).unwrap();
        for p in pts {
            assert!(l.signed_distance(p).abs() < 1e-12);
        }
        assert!(l.dir.x > 0.0);
    }

    #[test]
    fn degenerate_fits() {
        assert!(Line2::fit([Vector2::new(1.0, 1.0)]).is_none());
        assert!(Line2::fit([Vector2::new(1.0, 1.0), Vector2::new(1.0, 1.0)]).is_none());
    }
}
