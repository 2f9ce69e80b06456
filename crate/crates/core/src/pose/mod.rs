//! 5-DoF pointer pose from labeled junction contour points.
//!
//! Model points are `X = X₀ + b·d̂ + j·w·û` for `j = ±1`, with `û` the unit
//! normal of the plane through the camera center and the pointer axis. A
//! linear solve for the tip and tail depths initializes Levenberg–Marquardt
//! on the reprojection error. Detected points are expected in ideal
//! (undistorted) pixel coordinates; see [`DetectionResult::undistorted`].
//!
//! [`DetectionResult::undistorted`]: crate::detection::DetectionResult::undistorted

mod camera;
mod init;
mod refine;

pub use camera::{CameraModel, DistortionCoefficients};
pub use init::{init_depths_linear, Initialization};
pub use refine::{estimate_pose, refine_pose_lm, EdgeResidual, PoseEstimate, PoseOptions, MAX_ITERATIONS};

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, RowVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::association::PointerSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("pointer axis passes through the camera center")]
    DegenerateGeometry,
    #[error("point behind the camera")]
    BehindCamera,
    #[error("depth initialization is rank deficient")]
    DegenerateInitialization,
    #[error("need correspondences on at least 3 edges, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("non-finite residual")]
    Numeric,
    #[error("no association hypotheses")]
    NoHypotheses,
    #[error("best reprojection rms {rms:.3} px exceeds limit {limit:.3} px")]
    ResidualTooLarge { rms: f64, limit: f64 },
    #[error("all {} hypotheses failed: {}", .0.len(), .0.join("; "))]
    AllHypothesesFailed(Vec<String>),
}

/// Pointer tip position and unit axis direction (tip toward tail), world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointerPose {
    pub tip: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl PointerPose {
    /// Normalizes `direction`.
    pub fn new(tip: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            tip,
            direction: direction.normalize(),
        }
    }

    pub fn point_at(&self, b: f64) -> Vector3<f64> {
        self.tip + self.direction * b
    }

    /// Unit normal of the plane through `center` and the axis.
    pub fn side_vector(&self, center: &Vector3<f64>) -> Result<Vector3<f64>, PoseError> {
        let a = self.tip - center;
        let m = self.direction.cross(&a);
        if m.norm() <= 1e-12 * a.norm().max(1.0) {
            return Err(PoseError::DegenerateGeometry);
        }
        Ok(m.normalize())
    }
}

/// Local spherical chart for the direction: `(α, β) = (0, 0)` is `e3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionFrame {
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    pub e3: Vector3<f64>,
}

impl DirectionFrame {
    pub fn anchored_at(d: &Vector3<f64>) -> Self {
        let e3 = d.normalize();
        let helper = if e3.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = (helper - e3 * helper.dot(&e3)).normalize();
        let e2 = e3.cross(&e1);
        Self { e1, e2, e3 }
    }

    pub fn direction(&self, alpha: f64, beta: f64) -> Vector3<f64> {
        let (sa, ca) = alpha.sin_cos();
        let (sb, cb) = beta.sin_cos();
        (self.e3 * ca + self.e1 * sa) * cb + self.e2 * sb
    }

    /// Partial derivatives of [`Self::direction`] with respect to α and β.
    pub fn derivatives(&self, alpha: f64, beta: f64) -> (Vector3<f64>, Vector3<f64>) {
        let (sa, ca) = alpha.sin_cos();
        let (sb, cb) = beta.sin_cos();
        let da = (self.e1 * ca - self.e3 * sa) * cb;
        let db = -(self.e3 * ca + self.e1 * sa) * sb + self.e2 * cb;
        (da, db)
    }

    pub fn angles(&self, d: &Vector3<f64>) -> (f64, f64) {
        let d = d.normalize();
        (d.dot(&self.e1).atan2(d.dot(&self.e3)), d.dot(&self.e2).clamp(-1.0, 1.0).asin())
    }

    /// Pose from the 5 parameters `[X₀x, X₀y, X₀z, α, β]`.
    pub fn pose(&self, p: &[f64; 5]) -> PointerPose {
        PointerPose {
            tip: Vector3::new(p[0], p[1], p[2]),
            direction: self.direction(p[3], p[4]),
        }
    }

    pub fn params(&self, pose: &PointerPose) -> [f64; 5] {
        let (a, b) = self.angles(&pose.direction);
        [pose.tip.x, pose.tip.y, pose.tip.z, a, b]
    }
}

/// Ideal-pixel projections of the contour points `[j = −1, j = +1]` of the
/// given edges.
pub fn project_pointer_edges(
    pose: &PointerPose,
    camera: &CameraModel,
    spec: &PointerSpec,
    edges: &[usize],
) -> Result<Vec<[Vector2<f64>; 2]>, PoseError> {
    let u = pose.side_vector(&camera.center())?;
    edges
        .iter()
        .map(|&i| {
            let e = spec.edges()[i];
            let axis = pose.point_at(e.distance_mm);
            Ok([
                camera.project(&(axis - u * e.radius_mm))?,
                camera.project(&(axis + u * e.radius_mm))?,
            ])
        })
        .collect()
}

/// One spec edge with its detected points assigned to `j = −1` and `j = +1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub edge: usize,
    pub points: [Vector2<f64>; 2],
}

/// Reprojection residuals and their analytic Jacobian.
#[derive(Debug, Clone)]
pub struct ReprojectionProblem<'a> {
    pub camera: &'a CameraModel,
    pub spec: &'a PointerSpec,
    pub observations: Vec<Observation>,
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl ReprojectionProblem<'_> {
    pub fn len(&self) -> usize {
        4 * self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Predicted minus detected, `[x, y]` per point, `j = −1` first.
    pub fn residuals(&self, frame: &DirectionFrame, p: &[f64; 5]) -> Result<DVector<f64>, PoseError> {
        let pose = frame.pose(p);
        let edges: Vec<usize> = self.observations.iter().map(|o| o.edge).collect();
        let pred = project_pointer_edges(&pose, self.camera, self.spec, &edges)?;
        let mut r = DVector::zeros(self.len());
        for (k, (o, x)) in self.observations.iter().zip(&pred).enumerate() {
            for j in 0..2 {
                let d = x[j] - o.points[j];
                r[4 * k + 2 * j] = d.x;
                r[4 * k + 2 * j + 1] = d.y;
            }
        }
        if r.iter().all(|v| v.is_finite()) {
            Ok(r)
        } else {
            Err(PoseError::Numeric)
        }
    }

    pub fn cost(&self, frame: &DirectionFrame, p: &[f64; 5]) -> Result<f64, PoseError> {
        Ok(self.residuals(frame, p)?.norm_squared())
    }

    /// Analytic Jacobian of [`Self::residuals`] with respect to `p`.
    pub fn jacobian(&self, frame: &DirectionFrame, p: &[f64; 5]) -> Result<DMatrix<f64>, PoseError> {
        let pose = frame.pose(p);
        let (d_alpha, d_beta) = frame.derivatives(p[3], p[4]);
        let d = pose.direction;
        let a = pose.tip - self.camera.center();
        let m = d.cross(&a);
        let nm = m.norm();
        if nm <= 1e-12 * a.norm().max(1.0) {
            return Err(PoseError::DegenerateGeometry);
        }
        let u = m / nm;
        let pu = (Matrix3::identity() - u * u.transpose()) / nm;
        // ∂û/∂X₀ and ∂û/∂(α, β).
        let du_dx0 = pu * skew(&d);
        let du_da = -pu * skew(&a) * d_alpha;
        let du_db = -pu * skew(&a) * d_beta;
        let k = self.camera.k();
        let r = self.camera.rotation();

        let mut jac = DMatrix::zeros(self.len(), 5);
        for (row, o) in self.observations.iter().enumerate() {
            let e = self.spec.edges()[o.edge];
            for (jj, sign) in [-1.0, 1.0].into_iter().enumerate() {
                let jw = sign * e.radius_mm;
                let x = pose.tip + d * e.distance_mm + u * jw;
                let xc = self.camera.to_camera(&x);
                let h = k * xc;
                if !(xc.z > 0.0) {
                    return Err(PoseError::BehindCamera);
                }
                let (px, py) = (h.x / h.z, h.y / h.z);
                let k0: RowVector3<f64> = k.row(0).into();
                let k1: RowVector3<f64> = k.row(1).into();
                let k2: RowVector3<f64> = k.row(2).into();
                let dproj = Matrix2x3::from_rows(&[(k0 - k2 * px) / h.z, (k1 - k2 * py) / h.z]) * r;
                let dx_dx0 = Matrix3::identity() + du_dx0 * jw;
                let dx_da = d_alpha * e.distance_mm + du_da * jw;
                let dx_db = d_beta * e.distance_mm + du_db * jw;
                let block = dproj * dx_dx0;
                let ca = dproj * dx_da;
                let cb = dproj * dx_db;
                for c in 0..2 {
                    let i = 4 * row + 2 * jj + c;
                    for q in 0..3 {
                        jac[(i, q)] = block[(c, q)];
                    }
                    jac[(i, 3)] = ca[c];
                    jac[(i, 4)] = cb[c];
                }
            }
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ClassId;

    fn spec_1000(b: &[f64], diam: f64) -> PointerSpec {
        let n = b.len();
        let labels: Vec<_> = (0..=n).map(|i| Some(ClassId(1 + (i % 3) as u8))).collect();
        PointerSpec::from_bands(b, &vec![diam; n], &labels, 1000.0).unwrap()
    }

    #[test]
    fn pinhole_examples() {
        let cam = CameraModel::from_intrinsics(Matrix3::identity()).unwrap();
        let pose = PointerPose::new(Vector3::new(0.0, 0.0, 2000.0), Vector3::x());
        let thin = spec_1000(&[100.0, 200.0, 300.0], 1e-9);
        let p = project_pointer_edges(&pose, &cam, &thin, &[0]).unwrap();
        assert!((p[0][0] - Vector2::new(0.05, 0.0)).norm() < 1e-12);
        let thick = spec_1000(&[100.0, 200.0, 300.0], 4.0);
        let p = project_pointer_edges(&pose, &cam, &thick, &[0]).unwrap();
        // û = ±y: the pair splits by ±2 mm / 2000 mm.
        assert!((p[0][0].x - 0.05).abs() < 1e-12 && (p[0][1].x - 0.05).abs() < 1e-12);
        assert!((p[0][0].y.abs() - 0.001).abs() < 1e-12);
        assert!((p[0][0].y + p[0][1].y).abs() < 1e-12);
    }

    #[test]
    fn axis_through_center_is_degenerate() {
        let cam = CameraModel::from_intrinsics(Matrix3::identity()).unwrap();
        let pose = PointerPose::new(Vector3::new(0.0, 0.0, 2000.0), Vector3::z());
        let s = spec_1000(&[100.0, 200.0, 300.0], 4.0);
        assert_eq!(project_pointer_edges(&pose, &cam, &s, &[0]), Err(PoseError::DegenerateGeometry));
    }

    #[test]
    fn behind_camera() {
        let cam = CameraModel::from_intrinsics(Matrix3::identity()).unwrap();
        let pose = PointerPose::new(Vector3::new(0.0, 10.0, -500.0), Vector3::x());
        let s = spec_1000(&[100.0, 200.0, 300.0], 4.0);
        assert_eq!(project_pointer_edges(&pose, &cam, &s, &[0]), Err(PoseError::BehindCamera));
    }

    #[test]
    fn frame_round_trip() {
        let d = Vector3::new(0.3, -0.5, 0.8).normalize();
        let f = DirectionFrame::anchored_at(&d);
        assert!((f.direction(0.0, 0.0) - d).norm() < 1e-15);
        let g = f.direction(0.4, -0.3);
        let (a, b) = f.angles(&g);
        assert!((a - 0.4).abs() < 1e-12 && (b + 0.3).abs() < 1e-12);
        assert!((g.norm() - 1.0).abs() < 1e-12);
    }
}
