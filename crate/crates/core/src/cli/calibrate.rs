use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use super::{CliError, Config};
use crate::color_model::{calibrate_colors, ColorClassSet};
use crate::imaging::io::{read_gray, read_ppm};
use crate::ClassId;

/// Calibration pixels below this saturation carry no reliable hue.
pub const CALIBRATION_MIN_SATURATION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub label: ClassId,
    pub name: Option<String>,
    pub samples: usize,
    /// Hue at the density maximum (rad).
    pub modal_hue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationSummary {
    pub classes: Vec<ClassSummary>,
}

impl fmt::Display for CalibrationSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.classes {
            let name = c.name.as_deref().unwrap_or("-");
            writeln!(
                f,
                "class {} ({name}): {} samples, modal hue {:.4} rad ({:.1} deg)",
                c.label,
                c.samples,
                c.modal_hue,
                c.modal_hue.to_degrees()
            )?;
        }
        Ok(())
    }
}

/// Build a color model from an image and its label mask, write it as JSON
/// to `output`, and summarize it.
pub fn cmd_calibrate(image: &Path, mask: &Path, config: &Config, output: &Path) -> Result<(ColorClassSet, CalibrationSummary), CliError> {
    let img = read_ppm(image).map_err(|e| CliError::image(image, e))?;
    let mask_img = read_gray(mask).map_err(|e| CliError::image(mask, e))?;
    let known: BTreeSet<ClassId> = config.pointer.known_labels().collect();
    let present: BTreeSet<ClassId> = mask_img.data.iter().filter(|&&v| v != 0).map(|&v| ClassId(v)).collect();
    let unknown: Vec<String> = present.difference(&known).map(ToString::to_string).collect();
    if !unknown.is_empty() {
        return Err(CliError::ConfigMismatch(format!(
            "{} labels class(es) {} absent from the config",
            mask.display(),
            unknown.join(", ")
        )));
    }
    let model = calibrate_colors(&img, &mask_img, CALIBRATION_MIN_SATURATION)?;
    let json = serde_json::to_string_pretty(&model).expect("color model serializes");
    std::fs::write(output, json).map_err(|e| CliError::io(output, e))?;
    let summary = CalibrationSummary {
        classes: model
            .classes()
            .iter()
            .map(|c| ClassSummary {
                label: c.label,
                name: config.pointer.label_names.get(&c.label).cloned(),
                samples: c.kde.samples().len(),
                modal_hue: c.kde.mode(),
            })
            .collect(),
    };
    Ok((model, summary))
}
