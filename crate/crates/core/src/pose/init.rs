use nalgebra::{DMatrix, Vector3};

use super::{CameraModel, PointerPose, PoseError};
use crate::association::{Correspondence, Homography1D, PointerSpec};
use crate::detection::DetectionResult;

/// Linear initialization with the camera-frame tip and tail depths it solved for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Initialization {
    pub pose: PointerPose,
    pub v0: f64,
    pub vn: f64,
}

/// Tip and tail depths from the axis-line approximation.
///
/// The homography (refit to all inlier pairs) locates the tip and tail
/// images on L₂. Each inlier edge at `αᵢ = bᵢ/bₙ` must then satisfy
/// `x̃ᵢ × ((1−αᵢ)·v₀·r₀ + αᵢ·vₙ·rₙ) = 0` with rays in normalized camera
/// coordinates; the stacked system fixes `v₀ : vₙ`, the known tip–tail
/// distance fixes the scale and positive depth fixes the sign.
pub fn init_depths_linear(
    corr: &Correspondence,
    result: &DetectionResult,
    camera: &CameraModel,
    spec: &PointerSpec,
) -> Result<Initialization, PoseError> {
    if corr.pairs.len() < 3 {
        return Err(PoseError::InsufficientCorrespondences(corr.pairs.len()));
    }
    let bn = spec.edges().last().expect("spec has edges").distance_mm;
    let samples: Vec<(f64, f64)> = corr
        .pairs
        .iter()
        .map(|&(d, k)| (result.edges[d].axis_coordinate, spec.edges()[k].distance_mm))
        .collect();
    let h = Homography1D::fit_least_squares(&samples).unwrap_or(corr.homography);
    let (t0, tn) = match (h.invert(0.0), h.invert(bn)) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => (a, b),
        _ => return Err(PoseError::DegenerateInitialization),
    };
    let (t_lo, t_hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), s| (l.min(s.0), u.max(s.0)));
    if !(t_hi - t_lo > 1e-9 * t_hi.abs().max(1.0)) {
        return Err(PoseError::DegenerateInitialization);
    }
    let l2 = result.l2;
    let r0 = camera.back_project(&l2.at(t0));
    let rn = camera.back_project(&l2.at(tn));

    let mut a = DMatrix::zeros(3 * samples.len(), 2);
    for (i, &(t, b)) in samples.iter().enumerate() {
        let alpha = b / bn;
        let x = camera.back_project(&l2.at(t)).normalize();
        let c0 = x.cross(&r0) * (1.0 - alpha);
        let cn = x.cross(&rn) * alpha;
        for k in 0..3 {
            a[(3 * i + k, 0)] = c0[k];
            a[(3 * i + k, 1)] = cn[k];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(PoseError::DegenerateInitialization)?;
    let (big, small) = if svd.singular_values[0] >= svd.singular_values[1] {
        (0, 1)
    } else {
        (1, 0)
    };
    let (s_big, s_small) = (svd.singular_values[big], svd.singular_values[small]);
    if !(s_big > 1e-12) || s_small > 0.5 * s_big {
        return Err(PoseError::DegenerateInitialization);
    }
    let (mut v0, mut vn) = (v_t[(small, 0)], v_t[(small, 1)]);
    if v0 < 0.0 && vn < 0.0 {
        v0 = -v0;
        vn = -vn;
    }
    if !(v0 > 0.0 && vn > 0.0) {
        return Err(PoseError::BehindCamera);
    }
    let span = (rn * vn - r0 * v0).norm();
    if !(span > 0.0) {
        return Err(PoseError::DegenerateInitialization);
    }
    let scale = bn / span;
    v0 *= scale;
    vn *= scale;
    let tip_c: Vector3<f64> = r0 * v0;
    let tail_c: Vector3<f64> = rn * vn;
    let dir_c = (tail_c - tip_c).normalize();
    let pose = PointerPose::new(camera.to_world(&tip_c), camera.rotation().transpose() * dir_c);
    Ok(Initialization { pose, v0, vn })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::Orientation;
    use crate::ClassId;
    use nalgebra::{Matrix3, Vector2};

    fn setup(tip: Vector3<f64>, tail: Vector3<f64>) -> (Correspondence, DetectionResult, CameraModel, PointerSpec) {
        let cam = CameraModel::from_intrinsics(Matrix3::identity()).unwrap();
        let len = (tail - tip).norm();
        let b = [0.15 * len, 0.4 * len, 0.7 * len, len];
        let labels = [1, 2, 1, 3, 2].map(|v| Some(ClassId(v)));
        let spec = PointerSpec::from_bands(&b, &[1e-6; 4], &labels, len).unwrap();
        let d = (tail - tip) / len;
        let pts: Vec<[Vector2<f64>; 2]> = b
            .iter()
            .map(|&bi| {
                let x = tip + d * bi;
                let p = Vector2::new(x.x / x.z, x.y / x.z);
                [p, p]
            })
            .collect();
        let img_dir = pts[3][0] - pts[0][0];
        let result = DetectionResult::from_point_pairs(&pts, &spec.side_labels().to_vec(), img_dir).unwrap();
        let forward = result.l2.dir.dot(&img_dir) > 0.0;
        let pairs: Vec<(usize, usize)> = (0..4).map(|i| (i, if forward { i } else { 3 - i })).collect();
        let samples: Vec<(f64, f64)> = pairs
            .iter()
            .map(|&(i, k)| (result.edges[i].axis_coordinate, b[k]))
            .collect();
        let homography = Homography1D::fit_least_squares(&samples).unwrap();
        let corr = Correspondence {
            pairs,
            homography,
            inliers: vec![true; 4],
            orientation: if forward { Orientation::Forward } else { Orientation::Reversed },
            triplet_index: 0,
        };
        (corr, result, cam, spec)
    }

    #[test]
    fn fronto_parallel_depths() {
        let tip = Vector3::new(0.0, 0.0, 4000.0);
        let (corr, res, cam, spec) = setup(tip, Vector3::new(1000.0, 0.0, 4000.0));
        let init = init_depths_linear(&corr, &res, &cam, &spec).unwrap();
        assert!((init.v0 / 4000.0 - 1.0).abs() < 1e-6);
        assert!((init.vn / 4000.0 - 1.0).abs() < 1e-6);
        assert!((init.pose.tip - tip).norm() < 4000.0 * 1e-6);
    }

    #[test]
    fn tilted_in_depth() {
        let tip = Vector3::new(0.0, 0.0, 4000.0);
        let tail = Vector3::new(800.0, 0.0, 4600.0);
        let (corr, res, cam, spec) = setup(tip, tail);
        let init = init_depths_linear(&corr, &res, &cam, &spec).unwrap();
        assert!((init.v0 / 4000.0 - 1.0).abs() < 1e-6);
        assert!((init.vn / 4600.0 - 1.0).abs() < 1e-6);
        let d = (tail - tip).normalize();
        assert!((init.pose.direction - d).norm() < 1e-6);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let tip = Vector3::new(0.0, 0.0, 4000.0);
        let (corr, mut res, cam, spec) = setup(tip, Vector3::new(1000.0, 0.0, 4000.0));
        for e in &mut res.edges {
            e.axis_coordinate = 0.1;
        }
        assert_eq!(
            init_depths_linear(&corr, &res, &cam, &spec),
            Err(PoseError::DegenerateInitialization)
        );
    }
}
