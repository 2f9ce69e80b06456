use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{filter_point_cloud, locate_in_image, write_ply, CliError, Config, PointCloud};
use crate::color_model::ColorClassSet;
use crate::imaging::io::read_ppm;
use crate::pose::PoseEstimate;

/// One CSV row: a pose, or the stage at which the frame failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub file: String,
    pub status: String,
    pub tip_x_mm: Option<f64>,
    pub tip_y_mm: Option<f64>,
    pub tip_z_mm: Option<f64>,
    pub dir_x: Option<f64>,
    pub dir_y: Option<f64>,
    pub dir_z: Option<f64>,
    pub rms_px: Option<f64>,
    pub inliers: Option<usize>,
    pub error: Option<String>,
}

impl FrameRecord {
    pub fn new(frame: usize, file: String, outcome: &Result<PoseEstimate, CliError>) -> Self {
        match outcome {
            Ok(e) => Self {
                frame,
                file,
                status: "ok".into(),
                tip_x_mm: Some(e.pose.tip.x),
                tip_y_mm: Some(e.pose.tip.y),
                tip_z_mm: Some(e.pose.tip.z),
                dir_x: Some(e.pose.direction.x),
                dir_y: Some(e.pose.direction.y),
                dir_z: Some(e.pose.direction.z),
                rms_px: Some(e.rms_reprojection),
                inliers: Some(e.inlier_count()),
                error: None,
            },
            Err(err) => Self {
                frame,
                file,
                status: err.stage().into(),
                tip_x_mm: None,
                tip_y_mm: None,
                tip_z_mm: None,
                dir_x: None,
                dir_y: None,
                dir_z: None,
                rms_px: None,
                inliers: None,
                error: Some(err.to_string()),
            },
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub records: Vec<FrameRecord>,
    /// Tip positions of successful frames with outlier flags set.
    pub cloud: PointCloud,
}

impl TrackOutput {
    pub fn from_records(records: Vec<FrameRecord>) -> Self {
        let mut cloud = PointCloud::default();
        for r in records.iter().filter(|r| r.is_ok()) {
            if let (Some(x), Some(y), Some(z), Some(rms)) = (r.tip_x_mm, r.tip_y_mm, r.tip_z_mm, r.rms_px) {
                cloud.push(nalgebra::Vector3::new(x, y, z), r.frame, rms);
            }
        }
        Self {
            records,
            cloud: filter_point_cloud(cloud),
        }
    }

    pub fn failure_count(&self) -> usize {
        self.records.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn write_csv(&self, out: impl std::io::Write) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Write `<prefix>_poses.csv`, `<prefix>_raw.ply` and `<prefix>_filtered.ply`.
    pub fn write_files(&self, prefix: &Path) -> Result<[PathBuf; 3], CliError> {
        let named = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        let paths = [named("_poses.csv"), named("_raw.ply"), named("_filtered.ply")];
        if let Some(dir) = paths[0].parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let create = |p: &Path| std::fs::File::create(p).map(std::io::BufWriter::new).map_err(|e| CliError::io(p, e));
        self.write_csv(create(&paths[0])?)?;
        write_ply(&mut create(&paths[1])?, &self.cloud.points).map_err(|e| CliError::io(&paths[1], e))?;
        write_ply(&mut create(&paths[2])?, self.cloud.kept()).map_err(|e| CliError::io(&paths[2], e))?;
        Ok(paths)
    }
}

/// PPM files in `dir`, in lexicographic filename order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let is_ppm = path.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm"));
        if is_ppm && path.is_file() {
            frames.push(path);
        }
    }
    frames.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(frames)
}

/// Locate the pointer in every frame independently on `jobs` threads
/// (0 picks the machine default). Records come back in input order.
pub fn track_frames(frames: &[PathBuf], config: &Config, colors: &ColorClassSet, jobs: usize) -> Result<TrackOutput, CliError> {
    let spec = config.pointer.to_spec()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let records: Vec<FrameRecord> = pool.install(|| {
        frames
            .par_iter()
            .enumerate()
            .map(|(i, path)| {
                let outcome = read_ppm(path)
                    .map_err(|e| CliError::image(path, e))
                    .and_then(|img| locate_in_image(&img, colors, config, &spec));
                if let Err(e) = &outcome {
                    log::info!("frame {i} ({}): {e}", path.display());
                }
                let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                FrameRecord::new(i, name, &outcome)
            })
            .collect()
    });
    Ok(TrackOutput::from_records(records))
}

/// Track every frame in `dir` and write the CSV and both PLY clouds.
pub fn cmd_track(dir: &Path, config: &Config, colors: &ColorClassSet, prefix: &Path, jobs: usize) -> Result<TrackOutput, CliError> {
    let frames = list_frames(dir)?;
    if frames.is_empty() {
        return Err(CliError::Config(format!("{}: no .ppm frames", dir.display())));
    }
    let out = track_frames(&frames, config, colors, jobs)?;
    out.write_files(prefix)?;
    Ok(out)
}
