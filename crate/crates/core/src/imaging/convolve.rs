use super::{BinaryImage, ImagingError, RealImage};

/// Convolve a binary image with a real kernel (`kernel[row][col]`, odd sizes,
/// centered), treating out-of-bounds input as 0.
///
/// `out(x, y) = Σ k(u, v) · b(x − u, y − v)`; evaluated by scattering the
/// kernel from each set pixel, so cost scales with the number of set pixels.
pub fn convolve_unit_sum(b: &BinaryImage, kernel: &[Vec<f64>]) -> Result<RealImage, ImagingError> {
    let kh = kernel.len();
    let kw = kernel.first().map_or(0, Vec::len);
    if kh % 2 == 0 || kw % 2 == 0 || kernel.iter().any(|row| row.len() != kw) {
        return Err(ImagingError::KernelShape {
            width: kw,
            height: kh,
        });
    }
    let sum: f64 = kernel.iter().flatten().sum();
    if !(sum > 0.0) {
        return Err(ImagingError::InvalidKernel { sum });
    }
    let (w, h) = (b.width() as i64, b.height() as i64);
    let (cx, cy) = ((kw / 2) as i64, (kh / 2) as i64);
    let mut data = vec![0.0; b.width() * b.height()];
    for (x, y) in b.ones() {
        for (row, krow) in kernel.iter().enumerate() {
            let ty = y as i64 + row as i64 - cy;
            if ty < 0 || ty >= h {
                continue;
            }
            let base = ty as usize * b.width();
            for (col, &k) in krow.iter().enumerate() {
                let tx = x as i64 + col as i64 - cx;
                if tx >= 0 && tx < w {
                    data[base + tx as usize] += k;
                }
            }
        }
    }
    Ok(RealImage {
        width: b.width(),
        height: b.height(),
        data,
    })
}
