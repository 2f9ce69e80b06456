use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Points further than this many MADs beyond the median distance are flagged.
pub const MAD_FACTOR: f64 = 5.0;
/// Smaller clouds are left unfiltered.
pub const MIN_FILTER_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub position_mm: Vector3<f64>,
    pub frame: usize,
    pub rms_px: f64,
    pub filtered: bool,
}

/// Tip positions accumulated over a sequence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
    /// Set when the cloud was too small to filter.
    pub filter_skipped: bool,
}

impl PointCloud {
    pub fn push(&mut self, position_mm: Vector3<f64>, frame: usize, rms_px: f64) {
        self.points.push(CloudPoint {
            position_mm,
            frame,
            rms_px,
            filtered: false,
        });
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points that survived filtering.
    pub fn kept(&self) -> impl Iterator<Item = &CloudPoint> {
        self.points.iter().filter(|p| !p.filtered)
    }

    pub fn filtered_count(&self) -> usize {
        self.points.iter().filter(|p| p.filtered).count()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Flag points whose distance to the componentwise median exceeds the
/// median distance by more than [`MAD_FACTOR`] median absolute deviations
/// of those distances.
pub fn filter_point_cloud(mut cloud: PointCloud) -> PointCloud {
    for p in &mut cloud.points {
        p.filtered = false;
    }
    if cloud.len() < MIN_FILTER_POINTS {
        log::warn!("only {} points; outlier filtering skipped", cloud.len());
        cloud.filter_skipped = true;
        return cloud;
    }
    cloud.filter_skipped = false;
    let center = Vector3::from_fn(|i, _| median(&mut cloud.points.iter().map(|p| p.position_mm[i]).collect::<Vec<_>>()));
    let dist: Vec<f64> = cloud.points.iter().map(|p| (p.position_mm - center).norm()).collect();
    let med = median(&mut dist.clone());
    let mad = median(&mut dist.iter().map(|d| (d - med).abs()).collect::<Vec<_>>());
    for (p, d) in cloud.points.iter_mut().zip(&dist) {
        p.filtered = d - med > MAD_FACTOR * mad;
    }
    cloud
}

/// ASCII PLY with one vertex per point: `x y z quality`, quality being the
/// reprojection rms (px).
pub fn write_ply<'a>(out: &mut impl Write, points: impl IntoIterator<Item = &'a CloudPoint>) -> std::io::Result<()> {
    let points: Vec<&CloudPoint> = points.into_iter().collect();
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", points.len())?;
    for name in ["x", "y", "z", "quality"] {
        writeln!(out, "property float {name}")?;
    }
    writeln!(out, "end_header")?;
    for p in points {
        let v = &p.position_mm;
        writeln!(out, "{} {} {} {}", v.x, v.y, v.z, p.rms_px)?;
    }
    Ok(())
}
