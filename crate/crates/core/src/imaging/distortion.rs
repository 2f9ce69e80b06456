use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::ImagingError;

const MAX_ITERATIONS: usize = 20;
const TOLERANCE_PX: f64 = 1e-3;

/// Brown–Conrady lens distortion in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionModel {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl DistortionModel {
    /// Model with all coefficients zero.
    pub fn none(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            p1: 0.0,
            p2: 0.0,
            fx,
            fy,
            cx,
            cy,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.k3 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0
    }

    fn distort_normalized(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        let xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        (xd, yd)
    }

    /// Ideal pinhole pixel → distorted pixel.
    pub fn distort(&self, p: Vector2<f64>) -> Vector2<f64> {
        let x = (p.x - self.cx) / self.fx;
        let y = (p.y - self.cy) / self.fy;
        let (xd, yd) = self.distort_normalized(x, y);
        Vector2::new(xd * self.fx + self.cx, yd * self.fy + self.cy)
    }
}

/// Invert the distortion of one pixel by fixed-point iteration.
pub fn undistort_point(p: Vector2<f64>, model: &DistortionModel) -> Result<Vector2<f64>, ImagingError> {
    if model.is_identity() {
        return Ok(p);
    }
    let xd = (p.x - model.cx) / model.fx;
    let yd = (p.y - model.cy) / model.fy;
    let (mut x, mut y) = (xd, yd);
    for _ in 0..MAX_ITERATIONS {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (model.k1 + r2 * (model.k2 + r2 * model.k3));
        let dx = 2.0 * model.p1 * x * y + model.p2 * (r2 + 2.0 * x * x);
        let dy = model.p1 * (r2 + 2.0 * y * y) + 2.0 * model.p2 * x * y;
        let nx = (xd - dx) / radial;
        let ny = (yd - dy) / radial;
        let step = ((nx - x) * model.fx).hypot((ny - y) * model.fy);
        x = nx;
        y = ny;
        if !x.is_finite() || !y.is_finite() {
            break;
        }
        if step < 1e-9 {
            break;
        }
    }
    let ideal = Vector2::new(x * model.fx + model.cx, y * model.fy + model.cy);
    let reprojected = model.distort(ideal);
    if !ideal.iter().all(|v| v.is_finite()) || (reprojected - p).norm() > TOLERANCE_PX {
        return Err(ImagingError::NonConvergence { x: p.x, y: p.y });
    }
    Ok(ideal)
}

pub fn undistort_points(pts: &[Vector2<f64>], model: &DistortionModel) -> Result<Vec<Vector2<f64>>, ImagingError> {
    pts.iter().map(|&p| undistort_point(p, model)).collect()
}
