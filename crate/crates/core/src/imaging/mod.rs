//! Raster images and the low-level operations the detector is built from.
//!
//! Pixel `(x, y)` has its center at continuous coordinate `(x, y)`; rows are
//! stored top to bottom.

mod color;
mod components;
mod convolve;
mod distortion;
pub mod io;
mod morphology;

pub use color::{hsv, rgb_to_hue_saturation};
pub use components::{connected_components, Region};
pub use convolve::convolve_unit_sum;
pub use distortion::{undistort_point, undistort_points, DistortionModel};
pub use morphology::{dilate_disk, disk_offsets, erode_disk};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("image dimensions must be at least 1x1 (got {width}x{height})")]
    EmptyImage { width: usize, height: usize },
    #[error("pixel buffer holds {got} pixels, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("channel value {value} outside [0, 1] at pixel {index}")]
    ChannelRange { index: usize, value: f32 },
    #[error("kernel must have odd dimensions (got {width}x{height})")]
    KernelShape { width: usize, height: usize },
    #[error("kernel sum {sum} is not positive")]
    InvalidKernel { sum: f64 },
    #[error("undistortion did not converge for point ({x:.3}, {y:.3})")]
    NonConvergence { x: f64, y: f64 },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<[f32; 3]>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[f32; 3]>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyImage { width, height });
        }
        if pixels.len() != width * height {
            return Err(ImagingError::BufferSize {
                expected: width * height,
                got: pixels.len(),
            });
        }
        for (index, px) in pixels.iter().enumerate() {
            for &value in px {
                if !(0.0..=1.0).contains(&value) {
                    return Err(ImagingError::ChannelRange { index, value });
                }
            }
        }
        Ok(Self { width, height, pixels })
    }

    /// Uniformly colored image.
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self, ImagingError> {
        let rgb = rgb.map(|c| c.clamp(0.0, 1.0));
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixels[y * self.width + x]
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [[f32; 3]] {
        &mut self.pixels
    }

    /// Shift content by an integer offset, filling uncovered pixels with `fill`.
    pub fn translated(&self, dx: i64, dy: i64, fill: [f32; 3]) -> Self {
        let mut out = vec![fill; self.pixels.len()];
        for y in 0..self.height as i64 {
            let sy = y - dy;
            if sy < 0 || sy >= self.height as i64 {
                continue;
            }
            for x in 0..self.width as i64 {
                let sx = x - dx;
                if sx < 0 || sx >= self.width as i64 {
                    continue;
                }
                out[(y as usize) * self.width + x as usize] =
                    self.pixels[(sy as usize) * self.width + sx as usize];
            }
        }
        Self {
            width: self.width,
            height: self.height,
            pixels: out,
        }
    }
}

/// Per-pixel hexcone hue (radians), saturation and value.
#[derive(Debug, Clone)]
pub struct HueSatImage {
    pub width: usize,
    pub height: usize,
    pub hue: Vec<f32>,
    pub saturation: Vec<f32>,
    pub value: Vec<f32>,
    pub hue_valid: Vec<bool>,
}

impl HueSatImage {
    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Chroma (max - min channel), which is linear in coverage when a color
    /// is mixed with an achromatic background.
    #[inline]
    pub fn chroma(&self, i: usize) -> f32 {
        self.saturation[i] * self.value[i]
    }

    /// Bilinearly interpolated chroma; `None` outside the image.
    pub fn chroma_at(&self, x: f64, y: f64) -> Option<f64> {
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        if x0 + 1 >= self.width || y0 + 1 >= self.height {
            return None;
        }
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let c = |xx: usize, yy: usize| self.chroma(self.index(xx, yy)) as f64;
        let top = c(x0, y0) * (1.0 - fx) + c(x0 + 1, y0) * fx;
        let bottom = c(x0, y0 + 1) * (1.0 - fx) + c(x0 + 1, y0 + 1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}

/// One boolean per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImagingError> {
        if bits.len() != width * height {
            return Err(ImagingError::BufferSize {
                expected: width * height,
                got: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    /// Build from a predicate over pixel coordinates.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-bounds reads are `false`.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.bits[y as usize * self.width + x as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Coordinates of all set pixels in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn and(&self, other: &BinaryImage) -> BinaryImage {
        assert_eq!((self.width, self.height), (other.width, other.height));
        BinaryImage {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn or_assign(&mut self, other: &BinaryImage) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryImage) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}

/// Dense real-valued image.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RealImage {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn threshold(&self, level: f64) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            bits: self.data.iter().map(|&v| v >= level).collect(),
        }
    }
}
