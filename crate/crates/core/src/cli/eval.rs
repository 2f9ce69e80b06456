use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{locate_in_image, locate_in_points, noisy_points_detection, CliError, Config};
use crate::color_model::ColorClassSet;
use crate::pose::PoseEstimate;
use crate::synthetic::{self, calibrated_colors_like, ground_truth_points, render, SceneSpec};

/// Where the contour points of each trial come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Exact projected contour points plus Gaussian noise.
    #[default]
    Points,
    /// Full detection on a rendered frame.
    Image,
}

/// Depth × angle grid of synthetic trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub depths_mm: Vec<f64>,
    pub angles_deg: Vec<f64>,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub mode: EvalMode,
    /// Noise added to every contour coordinate in points mode.
    #[serde(default)]
    pub point_noise_px: f64,
    #[serde(default)]
    pub blur_sigma_px: f64,
    /// Per-channel image noise in image mode.
    #[serde(default)]
    pub pixel_noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_width")]
    pub width_px: usize,
    #[serde(default = "default_height")]
    pub height_px: usize,
}

fn one() -> usize {
    1
}

fn default_width() -> usize {
    synthetic::IMAGE_WIDTH
}

fn default_height() -> usize {
    synthetic::IMAGE_HEIGHT
}

impl SweepConfig {
    pub fn new(depths_mm: Vec<f64>, angles_deg: Vec<f64>) -> Self {
        Self {
            depths_mm,
            angles_deg,
            trials: 1,
            mode: EvalMode::Points,
            point_noise_px: 0.0,
            blur_sigma_px: 0.0,
            pixel_noise: 0.0,
            seed: 0,
            width_px: default_width(),
            height_px: default_height(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Accuracy of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub depth_mm: f64,
    pub angle_deg: f64,
    pub trials: usize,
    pub failures: usize,
    /// Over successful trials; empty when all failed.
    pub rms_tip_mm: Option<f64>,
    pub rms_direction_deg: Option<f64>,
    /// First principal axis of the tip estimates, oriented toward +z.
    pub pc1_x: Option<f64>,
    pub pc1_y: Option<f64>,
    pub pc1_z: Option<f64>,
}

impl CellReport {
    pub fn pc1(&self) -> Option<Vector3<f64>> {
        Some(Vector3::new(self.pc1_x?, self.pc1_y?, self.pc1_z?))
    }
}

/// Unit eigenvector of the largest scatter eigenvalue, signed so its
/// largest-magnitude component along z (then y, then x) is positive.
pub fn first_principal_component(points: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    if points.len() < 2 {
        return None;
    }
    let mean = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let cov = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    });
    let eig = cov.symmetric_eigen();
    let i = eig.eigenvalues.imax();
    if !(eig.eigenvalues[i] > 0.0) {
        return None;
    }
    let v: Vector3<f64> = eig.eigenvectors.column(i).into_owned();
    let key = [2, 1, 0].into_iter().map(|k| v[k]).find(|c| c.abs() > 1e-12).unwrap_or(1.0);
    Some(if key < 0.0 { -v } else { v })
}

struct Trial {
    cell: usize,
    outcome: Result<PoseEstimate, CliError>,
}

/// Run every trial of the sweep on `jobs` threads and summarize per cell.
/// Results depend only on the inputs and `sweep.seed`.
pub fn run_sweep(sweep: &SweepConfig, config: &Config, colors: Option<&ColorClassSet>, jobs: usize) -> Result<Vec<CellReport>, CliError> {
    let spec = config.pointer.to_spec()?;
    let mut template = SceneSpec::new(synthetic::grid_pose(500.0, 0.0), spec.clone());
    template.blur_sigma_px = sweep.blur_sigma_px;
    template.noise_sigma = sweep.pixel_noise;
    template.validate()?;
    let cells = synthetic::sweep(&sweep.depths_mm, &sweep.angles_deg, &template, sweep.seed)?;
    let calibrated;
    let colors = match (sweep.mode, colors) {
        (EvalMode::Image, None) => {
            calibrated = calibrated_colors_like(&config.camera, &template)?;
            Some(&calibrated)
        }
        (_, c) => c,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..sweep.trials).map(move |t| (c, t))).collect();
    let trials: Vec<Trial> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, t)| {
                let mut scene = cells[c].scene.clone();
                scene.seed = scene.seed.wrapping_add(t as u64);
                let outcome = match sweep.mode {
                    EvalMode::Points => ground_truth_points(&scene.pose, &spec, &config.camera)
                        .map_err(CliError::from)
                        .and_then(|pts| {
                            let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
                            noisy_points_detection(&pts, spec.side_labels(), sweep.point_noise_px, &mut rng)
                        })
                        .and_then(|det| locate_in_points(&det, config, &spec)),
                    EvalMode::Image => render(&scene, &config.camera, sweep.width_px, sweep.height_px)
                        .map_err(CliError::from)
                        .and_then(|(img, _)| locate_in_image(&img, colors.expect("image mode has a color model"), config, &spec)),
                };
                Trial { cell: c, outcome }
            })
            .collect()
    });
    let reports = cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let truth = cell.scene.pose;
            let ok: Vec<&PoseEstimate> = trials
                .iter()
                .filter(|t| t.cell == c)
                .filter_map(|t| t.outcome.as_ref().ok())
                .collect();
            let rms = |f: &dyn Fn(&PoseEstimate) -> f64| {
                (!ok.is_empty()).then(|| (ok.iter().map(|e| f(e).powi(2)).sum::<f64>() / ok.len() as f64).sqrt())
            };
            let tips: Vec<Vector3<f64>> = ok.iter().map(|e| e.pose.tip).collect();
            let pc1 = first_principal_component(&tips);
            CellReport {
                depth_mm: cell.depth_mm,
                angle_deg: cell.angle_deg,
                trials: sweep.trials,
                failures: sweep.trials - ok.len(),
                rms_tip_mm: rms(&|e| (e.pose.tip - truth.tip).norm()),
                rms_direction_deg: rms(&|e| e.pose.direction.angle(&truth.direction).to_degrees()),
                pc1_x: pc1.map(|v| v.x),
                pc1_y: pc1.map(|v| v.y),
                pc1_z: pc1.map(|v| v.z),
            }
        })
        .collect();
    Ok(reports)
}

pub fn write_report(reports: &[CellReport], out: impl std::io::Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Run the sweep and write `<prefix>_eval.csv`.
pub fn cmd_eval(
    sweep: &SweepConfig,
    config: &Config,
    colors: Option<&ColorClassSet>,
    prefix: &Path,
    jobs: usize,
) -> Result<(Vec<CellReport>, PathBuf), CliError> {
    let reports = run_sweep(sweep, config, colors, jobs)?;
    let mut name = prefix.as_os_str().to_owned();
    name.push("_eval.csv");
    let path = PathBuf::from(name);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_report(&reports, std::io::BufWriter::new(file))?;
    Ok((reports, path))
}
