use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::AssociationError;

/// Projective map of the line, `t ↦ (p·t + q) / (r·t + s)`, from image axis
/// coordinates (px) to axial pointer distance (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography1D {
    m: Matrix2<f64>,
}

impl Homography1D {
    /// The map `(a·t + c) / (g·t + 1)`.
    pub fn from_acg(a: f64, c: f64, g: f64) -> Self {
        Self {
            m: Matrix2::new(a, c, g, 1.0),
        }
    }

    pub fn identity() -> Self {
        Self::from_acg(1.0, 0.0, 0.0)
    }

    /// Parameters `(a, c, g)` with the constant denominator term scaled to 1.
    pub fn acg(&self) -> Option<(f64, f64, f64)> {
        let s = self.m[(1, 1)];
        (s.abs() > 1e-300).then(|| (self.m[(0, 0)] / s, self.m[(0, 1)] / s, self.m[(1, 0)] / s))
    }

    pub fn apply(&self, t: f64) -> f64 {
        (self.m[(0, 0)] * t + self.m[(0, 1)]) / (self.m[(1, 0)] * t + self.m[(1, 1)])
    }

    pub fn inverse(&self) -> Option<Self> {
        self.m.try_inverse().map(|m| Self { m })
    }

    /// Inverse map evaluated at `b`.
    pub fn invert(&self, b: f64) -> Option<f64> {
        let (p, q, r, s) = (self.m[(0, 0)], self.m[(0, 1)], self.m[(1, 0)], self.m[(1, 1)]);
        let den = p - r * b;
        (den.abs() > 1e-300).then(|| (s * b - q) / den)
    }

    /// +1 if increasing, -1 if decreasing (away from the pole).
    pub fn orientation(&self) -> f64 {
        self.m.determinant().signum()
    }

    /// True when the denominator keeps one sign on `[lo, hi]`.
    pub fn is_monotone_on(&self, lo: f64, hi: f64) -> bool {
        let den = |t: f64| self.m[(1, 0)] * t + self.m[(1, 1)];
        let (d0, d1) = (den(lo), den(hi));
        d0 != 0.0 && d1 != 0.0 && d0.signum() == d1.signum() && self.m.determinant() != 0.0
    }

    /// Exact fit through three `(t, b)` pairs.
    pub fn fit(pairs: [(f64, f64); 3]) -> Result<Self, AssociationError> {
        for i in 0..3 {
            for j in (i + 1)..3 {
                if pairs[i].0 == pairs[j].0 || pairs[i].1 == pairs[j].1 {
                    return Err(AssociationError::DegenerateSample);
                }
            }
        }
        let h = Self::fit_least_squares(&pairs)?;
        let (lo, hi) = pairs
            .iter()
            .fold((f64::MAX, f64::MIN), |(l, u), p| (l.min(p.0), u.max(p.0)));
        if !h.is_monotone_on(lo, hi) {
            return Err(AssociationError::DegenerateSample);
        }
        Ok(h)
    }

    /// Algebraic least-squares fit to three or more pairs, in normalized coordinates.
    pub fn fit_least_squares(pairs: &[(f64, f64)]) -> Result<Self, AssociationError> {
        if pairs.len() < 3 {
            return Err(AssociationError::DegenerateSample);
        }
        let n = pairs.len() as f64;
        let norm = |vals: Vec<f64>| {
            let mean = vals.iter().sum::<f64>() / n;
            let spread = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            (mean, spread)
        };
        let (tm, ts) = norm(pairs.iter().map(|p| p.0).collect());
        let (bm, bs) = norm(pairs.iter().map(|p| p.1).collect());
        if !(ts > 0.0) || !(bs > 0.0) {
            return Err(AssociationError::DegenerateSample);
        }
        // p t + q - r t b - s b = 0
        let mut a = DMatrix::zeros(pairs.len().max(4), 4);
        for (i, &(t, b)) in pairs.iter().enumerate() {
            let (t, b) = ((t - tm) / ts, (b - bm) / bs);
            a[(i, 0)] = t;
            a[(i, 1)] = 1.0;
            a[(i, 2)] = -t * b;
            a[(i, 3)] = -b;
        }
        let svd = a.svd(false, true);
        let v_t = svd.v_t.ok_or(AssociationError::DegenerateSample)?;
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
        let (smallest, second) = (order[0], order[1]);
        if svd.singular_values[second] < 1e-10 * svd.singular_values[order[3]] {
            return Err(AssociationError::DegenerateSample);
        }
        let v = v_t.row(smallest);
        let hn = Matrix2::new(v[0], v[1], v[2], v[3]);
        if hn.determinant().abs() < 1e-12 * hn.norm_squared() {
            return Err(AssociationError::DegenerateSample);
        }
        // b = bm + bs·hn((t - tm)/ts)
        let to_norm = Matrix2::new(1.0 / ts, -tm / ts, 0.0, 1.0);
        let from_norm = Matrix2::new(bs, bm, 0.0, 1.0);
        let m = from_norm * hn * to_norm;
        if !m.iter().all(|x| x.is_finite()) {
            return Err(AssociationError::DegenerateSample);
        }
        Ok(Self { m: m / m.norm() })
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Homography1D) -> Self {
        Self { m: self.m * other.m }
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        self.m
    }

    pub fn apply_homogeneous(&self, t: f64) -> Vector2<f64> {
        self.m * Vector2::new(t, 1.0)
    }
}
