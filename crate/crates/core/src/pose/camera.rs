use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::PoseError;
use crate::imaging::DistortionModel;

/// Pinhole camera `P = K [R | t]` with Brown–Conrady lens distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRepr", into = "CameraRepr")]
pub struct CameraModel {
    k: Matrix3<f64>,
    r: Matrix3<f64>,
    t: Vector3<f64>,
    distortion: DistortionModel,
}

/// Distortion coefficients `[k1, k2, p1, p2, k3]`.
pub type DistortionCoefficients = [f64; 5];

#[derive(Serialize, Deserialize)]
struct CameraRepr {
    k: [[f64; 3]; 3],
    r: [[f64; 3]; 3],
    t_mm: [f64; 3],
    distortion: DistortionCoefficients,
}

impl TryFrom<CameraRepr> for CameraModel {
    type Error = PoseError;
    fn try_from(c: CameraRepr) -> Result<Self, PoseError> {
        let m = |a: [[f64; 3]; 3]| Matrix3::from_fn(|i, j| a[i][j]);
        Self::new(m(c.k), m(c.r), Vector3::from(c.t_mm), c.distortion)
    }
}

impl From<CameraModel> for CameraRepr {
    fn from(c: CameraModel) -> Self {
        let a = |m: &Matrix3<f64>| [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]));
        let d = &c.distortion;
        CameraRepr {
            k: a(&c.k),
            r: a(&c.r),
            t_mm: [c.t.x, c.t.y, c.t.z],
            distortion: [d.k1, d.k2, d.p1, d.p2, d.k3],
        }
    }
}

impl CameraModel {
    pub fn new(
        k: Matrix3<f64>,
        r: Matrix3<f64>,
        t: Vector3<f64>,
        distortion: DistortionCoefficients,
    ) -> Result<Self, PoseError> {
        let bad = |m: &str| Err(PoseError::InvalidCamera(m.to_string()));
        if !(k[(1, 0)] == 0.0 && k[(2, 0)] == 0.0 && k[(2, 1)] == 0.0) {
            return bad("K must be upper triangular");
        }
        if !(k[(0, 0)] > 0.0 && k[(1, 1)] > 0.0 && k[(2, 2)] > 0.0) {
            return bad("K must have a positive diagonal");
        }
        if (r.transpose() * r - Matrix3::identity()).amax() > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return bad("R must be a rotation");
        }
        if !(k.iter().chain(r.iter()).chain(t.iter()).chain(distortion.iter()).all(|v| v.is_finite())) {
            return bad("non-finite camera parameter");
        }
        let k = k / k[(2, 2)];
        let [k1, k2, p1, p2, k3] = distortion;
        let distortion = DistortionModel {
            k1,
            k2,
            k3,
            p1,
            p2,
            ..DistortionModel::none(k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)])
        };
        Ok(Self { k, r, t, distortion })
    }

    /// Camera at the world origin looking down +z, without distortion.
    pub fn from_intrinsics(k: Matrix3<f64>) -> Result<Self, PoseError> {
        Self::new(k, Matrix3::identity(), Vector3::zeros(), [0.0; 5])
    }

    pub fn k(&self) -> &Matrix3<f64> {
        &self.k
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.t
    }

    pub fn distortion(&self) -> &DistortionModel {
        &self.distortion
    }

    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.r);
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.t);
        self.k * rt
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -self.r.transpose() * self.t
    }

    pub fn to_camera(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.r * x + self.t
    }

    pub fn to_world(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.r.transpose() * (x - self.t)
    }

    /// Ideal (undistorted) pixel of a world point.
    pub fn project(&self, x: &Vector3<f64>) -> Result<Vector2<f64>, PoseError> {
        let c = self.to_camera(x);
        if !(c.z > 0.0) {
            return Err(PoseError::BehindCamera);
        }
        let h = self.k * c;
        Ok(Vector2::new(h.x / h.z, h.y / h.z))
    }

    /// Pixel of a world point including lens distortion.
    pub fn project_distorted(&self, x: &Vector3<f64>) -> Result<Vector2<f64>, PoseError> {
        Ok(self.distortion.distort(self.project(x)?))
    }

    /// Camera-frame ray `K⁻¹ [x, y, 1]ᵀ` (unit depth) through an ideal pixel.
    pub fn back_project(&self, p: &Vector2<f64>) -> Vector3<f64> {
        let k = &self.k;
        let y = (p.y - k[(1, 2)]) / k[(1, 1)];
        let x = (p.x - k[(0, 2)] - k[(0, 1)] * y) / k[(0, 0)];
        Vector3::new(x, y, 1.0)
    }
}
