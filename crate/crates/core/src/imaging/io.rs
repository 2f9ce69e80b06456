//! Binary PPM (P6) and PGM (P5) reading and writing, maxval 255.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{ImagingError, RasterImage};

/// 8-bit single-channel raster.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, ImagingError> {
    let bad = |m: &str| ImagingError::Format(format!("malformed PNM header: {m}"));
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(bad("missing magic"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected a number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("number out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing separator after maxval"));
    }
    if fields[2] != 255 {
        return Err(ImagingError::Format(format!(
            "only maxval 255 is supported (got {})",
            fields[2]
        )));
    }
    Ok(Header {
        magic,
        width: fields[0],
        height: fields[1],
        offset: pos + 1,
    })
}

/// Decode a P6 image; channels are divided by 255.
pub fn decode_ppm(bytes: &[u8]) -> Result<RasterImage, ImagingError> {
    let h = parse_header(bytes)?;
    if &h.magic != b"P6" {
        return Err(ImagingError::Format("expected binary PPM (P6)".into()));
    }
    let n = h.width * h.height;
    let body = &bytes[h.offset..];
    if body.len() < 3 * n {
        return Err(ImagingError::Format(format!(
            "PPM body has {} bytes, expected {}",
            body.len(),
            3 * n
        )));
    }
    let pixels = body[..3 * n]
        .chunks_exact(3)
        .map(|c| [c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0])
        .collect();
    RasterImage::new(h.width, h.height, pixels)
}

/// Decode a label raster from P5, or from the first channel of a P6.
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage, ImagingError> {
    let h = parse_header(bytes)?;
    let channels = match &h.magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(ImagingError::Format("expected P5 or P6".into())),
    };
    let n = h.width * h.height;
    let body = &bytes[h.offset..];
    if body.len() < channels * n {
        return Err(ImagingError::Format("PNM body truncated".into()));
    }
    let data = body[..channels * n].iter().step_by(channels).copied().collect();
    Ok(GrayImage {
        width: h.width,
        height: h.height,
        data,
    })
}

pub fn encode_ppm(img: &RasterImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.reserve(img.pixels().len() * 3);
    for px in img.pixels() {
        for &c in px {
            out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn read_ppm(path: &Path) -> Result<RasterImage, ImagingError> {
    decode_ppm(&fs::read(path)?)
}

pub fn read_gray(path: &Path) -> Result<GrayImage, ImagingError> {
    decode_gray(&fs::read(path)?)
}

pub fn write_ppm(path: &Path, img: &RasterImage) -> Result<(), ImagingError> {
    fs::File::create(path)?.write_all(&encode_ppm(img))?;
    Ok(())
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), ImagingError> {
    fs::File::create(path)?.write_all(&encode_pgm(img))?;
    Ok(())
}
