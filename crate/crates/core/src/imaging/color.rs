use std::f32::consts::PI;

use super::{HueSatImage, RasterImage};

/// Hexcone hue/saturation/value for one RGB triple.
///
/// Hue is in radians on `[0, 2π)` with pure red at 0; it is reported as
/// invalid when all channels are equal.
pub fn hsv(rgb: [f32; 3]) -> (f32, f32, f32, bool) {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    if chroma <= 0.0 {
        return (0.0, 0.0, max, false);
    }
    let sector = if max == r {
        let h = (g - b) / chroma;
        if h < 0.0 {
            h + 6.0
        } else {
            h
        }
    } else if max == g {
        (b - r) / chroma + 2.0
    } else {
        (r - g) / chroma + 4.0
    };
    let mut hue = sector * (PI / 3.0);
    if hue >= 2.0 * PI {
        hue -= 2.0 * PI;
    }
    (hue, chroma / max, max, true)
}

pub fn rgb_to_hue_saturation(img: &RasterImage) -> HueSatImage {
    let n = img.width() * img.height();
    let mut hue = Vec::with_capacity(n);
    let mut saturation = Vec::with_capacity(n);
    let mut value = Vec::with_capacity(n);
    let mut hue_valid = Vec::with_capacity(n);
    for &px in img.pixels() {
        let (h, s, v, ok) = hsv(px);
        hue.push(h);
        saturation.push(s);
        value.push(v);
        hue_valid.push(ok);
    }
    HueSatImage {
        width: img.width(),
        height: img.height(),
        hue,
        saturation,
        value,
        hue_valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(rgb: [f32; 3]) -> (f32, f32, bool) {
        let img = RasterImage::new(1, 1, vec![rgb]).unwrap();
        let hs = rgb_to_hue_saturation(&img);
        (hs.hue[0], hs.saturation[0], hs.hue_valid[0])
    }

    #[test]
    fn pure_red_is_hue_origin() {
        let (h, s, ok) = one([1.0, 0.0, 0.0]);
        assert_eq!(h, 0.0);
        assert_eq!(s, 1.0);
        assert!(ok);
    }

    #[test]
    fn gray_has_no_hue() {
        let (_, s, ok) = one([0.5, 0.5, 0.5]);
        assert_eq!(s, 0.0);
        assert!(!ok);
    }

    #[test]
    fn cyan_is_antipodal_to_red() {
        let (h, s, ok) = one([0.0, 1.0, 1.0]);
        assert!((h - PI).abs() < 1e-6);
        assert_eq!(s, 1.0);
        assert!(ok);
    }

    #[test]
    fn black_is_invalid() {
        let (_, s, ok) = one([0.0, 0.0, 0.0]);
        assert_eq!(s, 0.0);
        assert!(!ok);
    }

    fn circ_diff(a: f32, b: f32) -> f32 {
        let d = (a - b).rem_euclid(2.0 * PI);
        d.min(2.0 * PI - d)
    }

    proptest! {
        #[test]
        fn hue_and_saturation_ranges(r in 0.0f32..=1.0, g in 0.0f32..=1.0, b in 0.0f32..=1.0) {
            let (h, s, ok) = one([r, g, b]);
            prop_assert!((0.0..2.0 * PI).contains(&h));
            prop_assert!((0.0..=1.0).contains(&s));
            let max = r.max(g).max(b);
            let min = r.min(g).min(b);
            prop_assert_eq!(ok, max != min);
        }

        #[test]
        fn channel_rotation_shifts_hue_by_third_turn(r in 0.0f32..=1.0, g in 0.0f32..=1.0, b in 0.0f32..=1.0) {
            let (h0, s0, ok0) = one([r, g, b]);
            let (h1, s1, ok1) = one([b, r, g]);
            prop_assert_eq!(ok0, ok1);
            prop_assert!((s0 - s1).abs() < 1e-6);
            if ok0 {
                let expected = (h0 + 2.0 * PI / 3.0).rem_euclid(2.0 * PI);
                prop_assert!(circ_diff(h1, expected) < 1e-4, "{} vs {}", h1, expected);
            }
        }
    }
}
