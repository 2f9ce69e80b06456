use serde::{Deserialize, Serialize};

use super::DetectionError;

/// Thresholds, radii and filter constants of the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionParams {
    /// Pass-1 saturation threshold.
    pub s1: f64,
    /// Pass-2 saturation threshold.
    pub s2: f64,
    /// Pass-1 erosion radius (px).
    pub r1: usize,
    /// Pass-2 erosion radius (px).
    pub r2: usize,
    pub major_expand: f64,
    pub minor_expand: f64,
    pub binarize_threshold: f64,
    pub line_inlier_sigmas: f64,
    pub pair_separation_sigmas: f64,
    pub ransac_iterations: usize,
    pub ransac_seed: u64,
    /// Move each contour point onto the half-chroma crossing of the silhouette.
    pub refine_contours: bool,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            s1: 0.25,
            s2: 0.12,
            r1: 5,
            r2: 2,
            major_expand: 1.1,
            minor_expand: 1.5,
            binarize_threshold: 0.3,
            line_inlier_sigmas: 3.0,
            pair_separation_sigmas: 5.0,
            ransac_iterations: 200,
            ransac_seed: 0,
            refine_contours: true,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<(), DetectionError> {
        let bad = |m: &str| Err(DetectionError::InvalidParams(m.to_string()));
        if !(0.0 <= self.s2 && self.s2 < self.s1 && self.s1 <= 1.0) {
            return bad("need 0 <= s2 < s1 <= 1");
        }
        if !(0 < self.r2 && self.r2 < self.r1) {
            return bad("need 0 < r2 < r1");
        }
        if !(self.major_expand > 0.0 && self.minor_expand > 0.0) {
            return bad("box expansions must be positive");
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return bad("binarize threshold must lie in (0, 1)");
        }
        if !(self.line_inlier_sigmas > 0.0 && self.pair_separation_sigmas > 0.0) {
            return bad("sigma multipliers must be positive");
        }
        if self.ransac_iterations == 0 {
            return bad("ransac_iterations must be at least 1");
        }
        Ok(())
    }

    /// Adjacency distance for an erosion radius: `2r + 4` px.
    pub fn adjacency_distance(r: usize) -> usize {
        2 * r + 4
    }

    /// Junction halo width `e = 2·r2 + 1` px.
    pub fn halo(&self) -> usize {
        2 * self.r2 + 1
    }

    /// Radial scale of the junction kernel (px).
    pub fn sigma_d(&self) -> f64 {
        self.halo() as f64
    }

    /// Angular scale of the junction kernel (rad).
    pub fn sigma_a(&self) -> f64 {
        std::f64::consts::PI / 12.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_derived() {
        let p = DetectionParams::default();
        p.validate().unwrap();
        assert_eq!(DetectionParams::adjacency_distance(p.r1), 14);
        assert_eq!(DetectionParams::adjacency_distance(p.r2), 8);
        assert_eq!(p.halo(), 5);
        assert_eq!(p.sigma_d(), 5.0);
    }

    #[test]
    fn rejects_inverted_thresholds() {
        let p = DetectionParams {
            s2: 0.3,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = DetectionParams {
            r2: 5,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let p: DetectionParams = serde_json::from_str(r#"{"s1": 0.4}"#).unwrap();
        assert_eq!(p.s1, 0.4);
        assert_eq!(p.r1, 5);
    }
}
