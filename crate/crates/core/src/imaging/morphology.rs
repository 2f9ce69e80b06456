use super::BinaryImage;

/// Integer offsets `(dx, dy)` with `dx² + dy² ≤ radius²`.
pub fn disk_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Erosion by a disk: a pixel survives iff every pixel within Euclidean
/// distance `radius` is set. Pixels outside the image count as unset.
pub fn erode_disk(b: &BinaryImage, radius: usize) -> BinaryImage {
    if radius == 0 {
        return b.clone();
    }
    // Test far offsets first; they fail soonest on thin structures.
    let mut offsets = disk_offsets(radius);
    offsets.sort_by_key(|&(dx, dy)| std::cmp::Reverse(dx * dx + dy * dy));
    let mut out = BinaryImage::new(b.width(), b.height());
    for (x, y) in b.ones() {
        let (xi, yi) = (x as i64, y as i64);
        if offsets.iter().all(|&(dx, dy)| b.get_signed(xi + dx, yi + dy)) {
            out.set(x, y, true);
        }
    }
    out
}

/// Dilation by a disk (pixels within distance `radius` of a set pixel).
pub fn dilate_disk(b: &BinaryImage, radius: usize) -> BinaryImage {
    let offsets = disk_offsets(radius);
    let mut out = b.clone();
    let (w, h) = (b.width() as i64, b.height() as i64);
    for (x, y) in b.ones() {
        let (xi, yi) = (x as i64, y as i64);
        // Interior pixels add nothing new.
        if (xi > 0 && yi > 0 && xi + 1 < w && yi + 1 < h)
            && b.get(x - 1, y)
            && b.get(x + 1, y)
            && b.get(x, y - 1)
            && b.get(x, y + 1)
        {
            continue;
        }
        for &(dx, dy) in &offsets {
            let (nx, ny) = (xi + dx, yi + dy);
            if nx >= 0 && ny >= 0 && nx < w && ny < h {
                out.set(nx as usize, ny as usize, true);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_erode(b: &BinaryImage, radius: usize) -> BinaryImage {
        let r = radius as i64;
        BinaryImage::from_fn(b.width(), b.height(), |x, y| {
            for yy in 0..b.height() as i64 {
                for xx in 0..b.width() as i64 {
                    let (dx, dy) = (xx - x as i64, yy - y as i64);
                    if dx * dx + dy * dy <= r * r && !b.get(xx as usize, yy as usize) {
                        return false;
                    }
                }
            }
            // Disk reaching past the border touches unset pixels.
            let (x, y) = (x as i64, y as i64);
            x >= r && y >= r && x + r < b.width() as i64 && y + r < b.height() as i64
        })
    }

    #[test]
    fn radius_zero_is_identity() {
        let b = BinaryImage::from_fn(9, 7, |x, y| (x * 3 + y) % 4 == 0);
        assert_eq!(erode_disk(&b, 0), b);
    }

    #[test]
    fn thin_strip_vanishes() {
        let b = BinaryImage::from_fn(20, 20, |_, y| (8..11).contains(&y));
        assert_eq!(erode_disk(&b, 2).count_ones(), 0);
    }

    #[test]
    fn square_shrinks_to_seven() {
        let b = BinaryImage::from_fn(21, 21, |x, y| (5..16).contains(&x) && (5..16).contains(&y));
        let e = erode_disk(&b, 2);
        assert_eq!(e, brute_erode(&b, 2));
        let expected = BinaryImage::from_fn(21, 21, |x, y| (7..14).contains(&x) && (7..14).contains(&y));
        assert_eq!(e, expected);
        assert_eq!(e.count_ones(), 49);
    }

    #[test]
    fn dilation_matches_definition() {
        let b = BinaryImage::from_fn(15, 15, |x, y| (x, y) == (7, 7) || (x, y) == (1, 2));
        let d = dilate_disk(&b, 3);
        let expected = BinaryImage::from_fn(15, 15, |x, y| {
            b.ones().any(|(sx, sy)| {
                let dx = x as i64 - sx as i64;
                let dy = y as i64 - sy as i64;
                dx * dx + dy * dy <= 9
            })
        });
        assert_eq!(d, expected);
    }

    fn arb_image() -> impl Strategy<Value = BinaryImage> {
        (3usize..14, 3usize..14).prop_flat_map(|(w, h)| {
            proptest::collection::vec(proptest::bool::weighted(0.75), w * h)
                .prop_map(move |bits| BinaryImage::from_bits(w, h, bits).unwrap())
        })
    }

    proptest! {
        #[test]
        fn erosion_anti_extensive_and_monotone(b in arb_image(), r in 0usize..4) {
            let e1 = erode_disk(&b, r);
            let e2 = erode_disk(&b, r + 1);
            prop_assert!(e1.is_subset_of(&b));
            prop_assert!(e2.is_subset_of(&e1));
            prop_assert_eq!(e1, brute_erode(&b, r));
        }
    }
}
