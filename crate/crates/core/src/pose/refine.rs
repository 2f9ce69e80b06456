use nalgebra::{DVector, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    init_depths_linear, project_pointer_edges, CameraModel, DirectionFrame, Observation, PointerPose, PoseError,
    ReprojectionProblem,
};
use crate::association::{Correspondence, PointerSpec};
use crate::detection::DetectionResult;

pub const MAX_ITERATIONS: usize = 200;
const INITIAL_DAMPING: f64 = 1e-3;
const RELATIVE_TOLERANCE: f64 = 1e-10;
/// Re-anchor the direction chart once the elevation passes this (rad).
const REANCHOR_ELEVATION: f64 = std::f64::consts::FRAC_PI_4;

/// Residuals of one matched edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeResidual {
    /// Index into the detection result.
    pub detected: usize,
    /// Pointer edge index.
    pub edge: usize,
    /// Detected points in `j = −1, +1` order.
    pub points: [Vector2<f64>; 2],
    /// Predicted minus detected (px).
    pub residual: [Vector2<f64>; 2],
}

impl EdgeResidual {
    pub fn rms(&self) -> f64 {
        ((self.residual[0].norm_squared() + self.residual[1].norm_squared()) / 2.0).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: PointerPose,
    pub rms_reprojection: f64,
    pub residuals: Vec<EdgeResidual>,
    pub correspondence: Correspondence,
    /// Camera-frame depths from the linear initialization (mm).
    pub v0: f64,
    pub vn: f64,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
}

impl PoseEstimate {
    pub fn inlier_count(&self) -> usize {
        self.correspondence.pairs.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseOptions {
    /// Reject the best estimate when its rms exceeds this (px).
    pub max_rms: Option<f64>,
}

struct LmOutcome {
    pose: PointerPose,
    iterations: usize,
    initial_cost: f64,
}

/// Marquardt-damped Gauss–Newton over `[X₀, α, β]`. Accepted steps never
/// increase the cost.
fn levenberg_marquardt(problem: &ReprojectionProblem, start: &PointerPose) -> Result<LmOutcome, PoseError> {
    let mut frame = DirectionFrame::anchored_at(&start.direction);
    let mut p = frame.params(start);
    let mut r = problem.residuals(&frame, &p)?;
    let mut cost = r.norm_squared();
    let initial_cost = cost;
    let mut lambda = INITIAL_DAMPING;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && cost > 0.0 {
        iterations += 1;
        let j = problem.jacobian(&frame, &p)?;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let diag_floor = 1e-12 * jtj.diagonal().max().max(1e-300);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..5 {
                a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let cand: [f64; 5] = std::array::from_fn(|i| p[i] + step[i]);
            match problem.residuals(&frame, &cand) {
                Ok(rc) if rc.norm_squared() <= cost => {
                    let new_cost = rc.norm_squared();
                    let rel = (cost - new_cost) / cost.max(1e-300);
                    p = cand;
                    r = rc;
                    cost = new_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    if p[4].abs() > REANCHOR_ELEVATION {
                        let pose = frame.pose(&p);
                        frame = DirectionFrame::anchored_at(&pose.direction);
                        p = frame.params(&pose);
                    }
                    if rel < RELATIVE_TOLERANCE {
                        return Ok(LmOutcome {
                            pose: frame.pose(&p),
                            iterations,
                            initial_cost,
                        });
                    }
                    break;
                }
                Ok(_) | Err(PoseError::BehindCamera) | Err(PoseError::DegenerateGeometry) => lambda *= 10.0,
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            break;
        }
    }
    Ok(LmOutcome {
        pose: frame.pose(&p),
        iterations,
        initial_cost,
    })
}

/// Assign each detected pair to `j = ±1` by proximity to the prediction.
fn observations(
    pose: &PointerPose,
    corr: &Correspondence,
    result: &DetectionResult,
    camera: &CameraModel,
    spec: &PointerSpec,
) -> Result<Vec<Observation>, PoseError> {
    let edges: Vec<usize> = corr.pairs.iter().map(|&(_, k)| k).collect();
    let pred = project_pointer_edges(pose, camera, spec, &edges)?;
    Ok(corr
        .pairs
        .iter()
        .zip(&pred)
        .map(|(&(d, k), x)| {
            let (a, b) = (result.edges[d].p_a, result.edges[d].p_b);
            let straight = (x[0] - a).norm_squared() + (x[1] - b).norm_squared();
            let crossed = (x[0] - b).norm_squared() + (x[1] - a).norm_squared();
            Observation {
                edge: k,
                points: if straight <= crossed { [a, b] } else { [b, a] },
            }
        })
        .collect())
}

/// Levenberg–Marquardt refinement of `initial` against the correspondence.
///
/// `result` must hold ideal pixel coordinates. The side assignment of each
/// pair is fixed from the initial prediction and revisited once after
/// convergence.
pub fn refine_pose_lm(
    initial: &PointerPose,
    corr: &Correspondence,
    result: &DetectionResult,
    camera: &CameraModel,
    spec: &PointerSpec,
) -> Result<PoseEstimate, PoseError> {
    let mut distinct: Vec<usize> = corr.pairs.iter().map(|p| p.1).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(PoseError::InsufficientCorrespondences(distinct.len()));
    }
    let mut obs = observations(initial, corr, result, camera, spec)?;
    let mut problem = ReprojectionProblem {
        camera,
        spec,
        observations: obs.clone(),
    };
    let mut out = levenberg_marquardt(&problem, initial)?;
    let again = observations(&out.pose, corr, result, camera, spec)?;
    if again != obs {
        obs = again;
        problem.observations = obs.clone();
        let second = levenberg_marquardt(&problem, &out.pose)?;
        out = LmOutcome {
            initial_cost: out.initial_cost,
            iterations: out.iterations + second.iterations,
            ..second
        };
    }
    let frame = DirectionFrame::anchored_at(&out.pose.direction);
    let r: DVector<f64> = problem.residuals(&frame, &frame.params(&out.pose))?;
    let residuals = corr
        .pairs
        .iter()
        .zip(&obs)
        .enumerate()
        .map(|(k, (&(d, _), o))| EdgeResidual {
            detected: d,
            edge: o.edge,
            points: o.points,
            residual: [
                Vector2::new(r[4 * k], r[4 * k + 1]),
                Vector2::new(r[4 * k + 2], r[4 * k + 3]),
            ],
        })
        .collect();
    let final_cost = r.norm_squared();
    Ok(PoseEstimate {
        pose: out.pose,
        rms_reprojection: (final_cost / (2 * obs.len()) as f64).sqrt(),
        residuals,
        correspondence: corr.clone(),
        v0: 0.0,
        vn: 0.0,
        iterations: out.iterations,
        initial_cost: out.initial_cost,
        final_cost,
    })
}

/// Initialize and refine every hypothesis; keep the lowest rms (ties go
/// to the earlier hypothesis).
pub fn estimate_pose(
    result: &DetectionResult,
    hypotheses: &[Correspondence],
    camera: &CameraModel,
    spec: &PointerSpec,
    options: &PoseOptions,
) -> Result<PoseEstimate, PoseError> {
    if hypotheses.is_empty() {
        return Err(PoseError::NoHypotheses);
    }
    let outcomes: Vec<Result<PoseEstimate, PoseError>> = hypotheses
        .par_iter()
        .map(|corr| {
            let init = init_depths_linear(corr, result, camera, spec)?;
            let mut est = refine_pose_lm(&init.pose, corr, result, camera, spec)?;
            est.v0 = init.v0;
            est.vn = init.vn;
            Ok(est)
        })
        .collect();
    let mut best: Option<PoseEstimate> = None;
    let mut errors = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(est) => {
                if best.as_ref().is_none_or(|b| est.rms_reprojection < b.rms_reprojection) {
                    best = Some(est);
                }
            }
            Err(e) => errors.push(format!("hypothesis {i}: {e}")),
        }
    }
    let best = best.ok_or(PoseError::AllHypothesesFailed(errors))?;
    if let Some(limit) = options.max_rms {
        if best.rms_reprojection > limit {
            return Err(PoseError::ResidualTooLarge {
                rms: best.rms_reprojection,
                limit,
            });
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::{Homography1D, Orientation};
    use crate::ClassId;
    use nalgebra::{DMatrix, Matrix3, Rotation3, Vector3};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const B: [f64; 10] = [28.0, 44.0, 68.0, 86.0, 116.0, 132.0, 158.0, 178.0, 212.0, 229.0];

    fn spec() -> PointerSpec {
        let labels: Vec<_> = [1, 2, 1, 2, 1, 3, 2, 1, 2, 1, 2].iter().map(|&v| Some(ClassId(v))).collect();
        PointerSpec::from_bands(&B, &[6.0; 10], &labels, 251.0).unwrap()
    }

    fn camera() -> CameraModel {
        let k = Matrix3::new(2400.0, 0.0, 1224.0, 0.0, 2400.0, 1024.0, 0.0, 0.0, 1.0);
        CameraModel::from_intrinsics(k).unwrap()
    }

    fn truth() -> PointerPose {
        PointerPose::new(Vector3::new(-80.0, 30.0, 1500.0), Vector3::new(0.8, -0.2, 0.3))
    }

    /// Independent projection of the two silhouette points of edge `b`.
    fn oracle_points(pose: &PointerPose, cam: &CameraModel, b: f64, radius: f64) -> [Vector2<f64>; 2] {
        let x0 = pose.tip + pose.direction * b;
        let u = pose.direction.cross(&(x0 - cam.center())).normalize();
        [-1.0, 1.0].map(|j| {
            let x = cam.k() * cam.to_camera(&(x0 + u * (j * radius)));
            Vector2::new(x.x / x.z, x.y / x.z)
        })
    }

    /// Detection result and the true correspondence for a synthetic view.
    fn scene(pose: &PointerPose, cam: &CameraModel, noise: f64, seed: u64) -> (DetectionResult, Correspondence) {
        let spec = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let pts: Vec<[Vector2<f64>; 2]> = B
            .iter()
            .map(|&b| {
                oracle_points(pose, cam, b, 3.0)
                    .map(|p| if noise > 0.0 { p + Vector2::new(n.sample(&mut rng), n.sample(&mut rng)) } else { p })
            })
            .collect();
        let mid = |p: &[Vector2<f64>; 2]| (p[0] + p[1]) / 2.0;
        let dir = mid(&pts[9]) - mid(&pts[0]);
        let result = DetectionResult::from_point_pairs(&pts, spec.side_labels(), dir).unwrap();
        let forward = result.l2.dir.dot(&dir) > 0.0;
        let pairs: Vec<(usize, usize)> = (0..10).map(|i| (i, if forward { i } else { 9 - i })).collect();
        let samples: Vec<(f64, f64)> = pairs.iter().map(|&(i, k)| (result.edges[i].axis_coordinate, B[k])).collect();
        let corr = Correspondence {
            pairs,
            homography: Homography1D::fit_least_squares(&samples).unwrap(),
            inliers: vec![true; 10],
            orientation: if forward { Orientation::Forward } else { Orientation::Reversed },
            triplet_index: 0,
        };
        (result, corr)
    }

    fn perturbed(p: &PointerPose, dx: Vector3<f64>, da: f64, db: f64) -> PointerPose {
        let f = DirectionFrame::anchored_at(&p.direction);
        PointerPose::new(p.tip + dx, f.direction(da, db))
    }

    fn numeric_jacobian(problem: &ReprojectionProblem, frame: &DirectionFrame, p: &[f64; 5], h: f64) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(problem.len(), 5);
        for c in 0..5 {
            let (mut hi, mut lo) = (*p, *p);
            hi[c] += h;
            lo[c] -= h;
            let d = (problem.residuals(frame, &hi).unwrap() - problem.residuals(frame, &lo).unwrap()) / (2.0 * h);
            j.set_column(c, &d);
        }
        j
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let (cam, spec) = (camera(), spec());
        let pose = truth();
        let observations = (0..10)
            .map(|k| Observation {
                edge: k,
                points: oracle_points(&pose, &cam, B[k], 3.0),
            })
            .collect();
        let problem = ReprojectionProblem {
            camera: &cam,
            spec: &spec,
            observations,
        };
        let start = perturbed(&pose, Vector3::new(5.0, -3.0, 20.0), 0.05, -0.04);
        let frame = DirectionFrame::anchored_at(&Vector3::new(0.7, -0.1, 0.4).normalize());
        let p = frame.params(&start);
        let ja = problem.jacobian(&frame, &p).unwrap();
        for (c, h) in [1e-3, 1e-3, 1e-3, 1e-6, 1e-6].iter().enumerate() {
            let jn = numeric_jacobian(&problem, &frame, &p, *h);
            let (a, n) = (ja.column(c), jn.column(c));
            assert!((a - n).norm() <= 1e-6 * n.norm().max(1e-9), "column {c}: {a} vs {n}");
        }
    }

    #[test]
    fn recovers_exact_pose() {
        let (cam, spec) = (camera(), spec());
        let (res, corr) = scene(&truth(), &cam, 0.0, 0);
        let start = perturbed(&truth(), Vector3::new(15.0, -10.0, 60.0), 0.08, 0.05);
        let est = refine_pose_lm(&start, &corr, &res, &cam, &spec).unwrap();
        assert!((est.pose.tip - truth().tip).norm() < 1e-6, "{:?}", est.pose);
        assert!(est.pose.direction.angle(&truth().direction) < 1e-9);
        assert!(est.rms_reprojection < 1e-6);
        assert!(est.final_cost <= est.initial_cost);
        assert!(est.iterations <= MAX_ITERATIONS);
    }

    #[test]
    fn residuals_are_prediction_minus_detection() {
        let (cam, spec) = (camera(), spec());
        let (res, corr) = scene(&truth(), &cam, 0.5, 3);
        let est = estimate_pose(&res, &[corr], &cam, &spec, &PoseOptions::default()).unwrap();
        let mut sq = 0.0;
        for r in &est.residuals {
            let pred = oracle_points(&est.pose, &cam, B[r.edge], 3.0);
            for j in 0..2 {
                assert!((pred[j] - r.points[j] - r.residual[j]).norm() < 1e-7);
                sq += r.residual[j].norm_squared();
            }
            let d = &res.edges[r.detected];
            assert!(r.points.contains(&d.p_a) && r.points.contains(&d.p_b));
        }
        assert!((sq - est.final_cost).abs() < 1e-9 * sq.max(1.0));
        assert!(((sq / 20.0).sqrt() - est.rms_reprojection).abs() < 1e-9);
        // Five free parameters absorb part of the noise.
        assert!(est.rms_reprojection > 0.2 && est.rms_reprojection < 0.7, "{}", est.rms_reprojection);
    }

    #[test]
    fn shifted_association_fits_worse() {
        let (cam, spec) = (camera(), spec());
        let (res, corr) = scene(&truth(), &cam, 0.05, 1);
        let mut wrong = corr.clone();
        wrong.pairs = corr.pairs.iter().filter_map(|&(d, k)| {
            let k2 = if corr.orientation == Orientation::Forward { k.checked_add(1) } else { k.checked_sub(1) }?;
            (k2 < 10).then_some((d, k2))
        }).collect();
        wrong.inliers = vec![true; wrong.pairs.len()];
        let hyps = [wrong.clone(), corr.clone()];
        let best = estimate_pose(&res, &hyps, &cam, &spec, &PoseOptions::default()).unwrap();
        assert_eq!(best.correspondence.pairs, corr.pairs);
        assert!((best.pose.tip - truth().tip).norm() < 3.0);
        if let Ok(w) = estimate_pose(&res, &[wrong], &cam, &spec, &PoseOptions::default()) {
            assert!(w.rms_reprojection > 3.0 * best.rms_reprojection);
        }
    }

    #[test]
    fn error_cases() {
        let (cam, spec) = (camera(), spec());
        let (res, corr) = scene(&truth(), &cam, 0.5, 2);
        assert_eq!(
            estimate_pose(&res, &[], &cam, &spec, &PoseOptions::default()),
            Err(PoseError::NoHypotheses)
        );
        let strict = PoseOptions { max_rms: Some(1e-3) };
        assert!(matches!(
            estimate_pose(&res, &[corr.clone()], &cam, &spec, &strict),
            Err(PoseError::ResidualTooLarge { .. })
        ));
        let mut short = corr;
        short.pairs.truncate(2);
        assert!(matches!(
            estimate_pose(&res, &[short], &cam, &spec, &PoseOptions::default()),
            Err(PoseError::AllHypothesesFailed(v)) if v.len() == 1
        ));
    }

    #[test]
    fn rigid_change_of_world_frame() {
        let spec = spec();
        let cam = camera();
        let (res, corr) = scene(&truth(), &cam, 0.3, 5);
        let a = estimate_pose(&res, &[corr.clone()], &cam, &spec, &PoseOptions::default()).unwrap();
        // World moved by (Q, s): camera extrinsics become R Qᵀ, t − R Qᵀ s.
        let q = Rotation3::from_euler_angles(0.3, -0.4, 1.1).into_inner();
        let s = Vector3::new(100.0, -250.0, 40.0);
        let r2 = cam.rotation() * q.transpose();
        let t2 = cam.translation() - r2 * s;
        let moved = CameraModel::new(*cam.k(), r2, t2, [0.0; 5]).unwrap();
        let b = estimate_pose(&res, &[corr], &moved, &spec, &PoseOptions::default()).unwrap();
        assert!((b.pose.tip - (q * a.pose.tip + s)).norm() < 1e-5);
        assert!((b.pose.direction - q * a.pose.direction).norm() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn converges_from_nearby_starts(
            dx in -30.0..30.0f64, dy in -30.0..30.0f64, dz in -150.0..150.0f64,
            da in -0.2..0.2f64, db in -0.2..0.2f64,
        ) {
            let (cam, spec) = (camera(), spec());
            let (res, corr) = scene(&truth(), &cam, 0.0, 0);
            let start = perturbed(&truth(), Vector3::new(dx, dy, dz), da, db);
            let est = refine_pose_lm(&start, &corr, &res, &cam, &spec).unwrap();
            prop_assert!(est.final_cost <= est.initial_cost);
            prop_assert!((est.pose.tip - truth().tip).norm() < 1e-4, "{:?}", est.pose);
        }

        #[test]
        fn cost_never_increases_under_noise(
            seed in any::<u64>(), noise in 0.1..3.0f64,
            dx in -20.0..20.0f64, dz in -100.0..100.0f64, da in -0.1..0.1f64,
        ) {
            let (cam, spec) = (camera(), spec());
            let (res, corr) = scene(&truth(), &cam, noise, seed);
            let start = perturbed(&truth(), Vector3::new(dx, 0.0, dz), da, 0.0);
            let est = refine_pose_lm(&start, &corr, &res, &cam, &spec).unwrap();
            prop_assert!(est.final_cost <= est.initial_cost);
            // The truth is a feasible point, so the optimum cannot be worse
            // than the cost of the true pose.
            let observations = est.residuals.iter().map(|r| Observation { edge: r.edge, points: r.points }).collect();
            let problem = ReprojectionProblem { camera: &cam, spec: &spec, observations };
            let frame = DirectionFrame::anchored_at(&truth().direction);
            let truth_cost = problem.cost(&frame, &frame.params(&truth())).unwrap();
            prop_assert!(est.final_cost <= truth_cost * (1.0 + 1e-9) + 1e-12, "{} > {truth_cost}", est.final_cost);
        }
    }
}
