use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{truth, GroundTruth, SceneSpec, SyntheticError, SUPERSAMPLING};
use crate::association::PointerSpec;
use crate::imaging::io::GrayImage;
use crate::imaging::{undistort_point, RasterImage};
use crate::pose::CameraModel;

/// One stretch of the pointer surface with linearly varying radius.
struct Segment {
    from: f64,
    to: f64,
    r0: f64,
    slope: f64,
}

/// The pointer as a surface of revolution around its axis.
struct Surface {
    tip: Vector3<f64>,
    dir: Vector3<f64>,
    length: f64,
    segments: Vec<Segment>,
    caps: [(f64, f64); 2],
}

impl Surface {
    fn new(scene: &SceneSpec) -> Self {
        let spec: &PointerSpec = &scene.spec;
        let length = spec.total_length_mm();
        let mut knots = vec![0.0];
        knots.extend(spec.edges().iter().map(|e| e.distance_mm));
        knots.push(length);
        let segments = knots
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                let (r0, r1) = (spec.radius_at(w[0]), spec.radius_at(w[1]));
                Segment {
                    from: w[0],
                    to: w[1],
                    r0,
                    slope: (r1 - r0) / (w[1] - w[0]),
                }
            })
            .collect();
        Self {
            tip: scene.pose.tip,
            dir: scene.pose.direction,
            length,
            segments,
            caps: [(0.0, spec.radius_at(0.0)), (length, spec.radius_at(length))],
        }
    }

    /// Axial coordinate of the nearest surface point along the ray
    /// `origin + λ·v`, λ > 0.
    fn hit(&self, origin: &Vector3<f64>, v: &Vector3<f64>) -> Option<f64> {
        let o = origin - self.tip;
        let os = self.dir.dot(&o);
        let op = o - self.dir * os;
        let vs = self.dir.dot(v);
        let vp = v - self.dir * vs;
        let (pp, pv, vv) = (op.norm_squared(), op.dot(&vp), vp.norm_squared());
        let mut best: Option<(f64, f64)> = None;
        let mut consider = |lambda: f64, s: f64| {
            if lambda > 0.0 && best.is_none_or(|(l, _)| lambda < l) {
                best = Some((lambda, s));
            }
        };
        for seg in &self.segments {
            // |op + λ vp|² = (r0 + slope·(os + λ vs − from))²
            let c0 = seg.r0 + seg.slope * (os - seg.from);
            let c1 = seg.slope * vs;
            let a = vv - c1 * c1;
            let b = 2.0 * (pv - c0 * c1);
            let c = pp - c0 * c0;
            let mut roots = [f64::NAN; 2];
            if a.abs() <= 1e-14 * (vv + c1 * c1).max(1e-300) {
                if b != 0.0 {
                    roots[0] = -c / b;
                }
            } else {
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    continue;
                }
                let q = -0.5 * (b + b.signum() * disc.sqrt());
                roots = [q / a, if q != 0.0 { c / q } else { f64::NAN }];
            }
            for lambda in roots {
                if !lambda.is_finite() {
                    continue;
                }
                let s = os + lambda * vs;
                if s >= seg.from && s <= seg.to && seg.r0 + seg.slope * (s - seg.from) >= 0.0 {
                    consider(lambda, s);
                }
            }
        }
        if vs != 0.0 {
            for (s_cap, r_cap) in self.caps {
                let lambda = (s_cap - os) / vs;
                if (op + vp * lambda).norm_squared() <= r_cap * r_cap {
                    consider(lambda, s_cap);
                }
            }
        }
        best.map(|(_, s)| s.clamp(0.0, self.length))
    }

    fn surface_point(&self, s: f64, r: f64, phi: f64) -> Vector3<f64> {
        let helper = if self.dir.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = self.dir.cross(&helper).normalize();
        let e2 = self.dir.cross(&e1);
        self.tip + self.dir * s + (e1 * phi.cos() + e2 * phi.sin()) * r
    }
}

struct Renderer<'a> {
    scene: &'a SceneSpec,
    camera: &'a CameraModel,
    surface: Surface,
    center: Vector3<f64>,
    world_from_camera: nalgebra::Matrix3<f64>,
}

enum Sample {
    Occluder([f32; 3]),
    Pointer(f64),
    Distractor([f32; 3]),
    Background,
}

impl Renderer<'_> {
    fn sample(&self, x: f64, y: f64) -> Sample {
        if let Some(o) = self.scene.occluders.iter().rev().find(|o| o.contains(x, y)) {
            return Sample::Occluder(o.rgb);
        }
        if let Ok(ideal) = undistort_point(Vector2::new(x, y), self.camera.distortion()) {
            let ray = self.world_from_camera * self.camera.back_project(&ideal);
            if let Some(s) = self.surface.hit(&self.center, &ray) {
                return Sample::Pointer(s);
            }
        }
        if let Some(d) = self.scene.distractors.iter().rev().find(|d| {
            let (dx, dy) = (x - d.center[0], y - d.center[1]);
            dx * dx + dy * dy <= d.radius_px * d.radius_px
        }) {
            return Sample::Distractor(d.rgb);
        }
        Sample::Background
    }

    fn pointer_color(&self, s: f64) -> [f32; 3] {
        let label = self.scene.spec.band_at(s).flatten();
        let mut c = self.scene.color_of(label).unwrap_or(self.scene.undefined_color);
        for h in &self.scene.highlights {
            if s >= h.from_mm && s <= h.to_mm {
                c = c.map(|v| v + h.desaturation * (1.0 - v));
            }
        }
        c
    }

    fn color(&self, x: f64, y: f64) -> [f32; 3] {
        match self.sample(x, y) {
            Sample::Occluder(c) | Sample::Distractor(c) => c,
            Sample::Pointer(s) => self.pointer_color(s),
            Sample::Background => self.scene.background,
        }
    }

    fn label(&self, x: f64, y: f64) -> u8 {
        match self.sample(x, y) {
            Sample::Pointer(s) => self.scene.spec.band_at(s).flatten().map_or(0, |l| l.0),
            _ => 0,
        }
    }

    /// Pixel box `[x0, x1] × [y0, y1]` that can contain the pointer.
    fn pointer_box(&self, width: usize, height: usize) -> Result<Option<[usize; 4]>, SyntheticError> {
        let sf = &self.surface;
        let mut lo = Vector2::repeat(f64::INFINITY);
        let mut hi = Vector2::repeat(f64::NEG_INFINITY);
        let mut any = false;
        for i in 0..=256 {
            let s = sf.length * i as f64 / 256.0;
            let r = self.scene.spec.radius_at(s);
            for k in 0..16 {
                let phi = k as f64 * std::f64::consts::TAU / 16.0;
                if let Ok(p) = self.camera.project_distorted(&sf.surface_point(s, r, phi)) {
                    lo = lo.inf(&p);
                    hi = hi.sup(&p);
                    any = true;
                }
            }
        }
        if !any {
            return Err(SyntheticError::BehindCamera);
        }
        let margin = 3.0;
        let (x0, y0) = ((lo.x - margin).floor().max(0.0), (lo.y - margin).floor().max(0.0));
        let (x1, y1) = (
            (hi.x + margin).ceil().min((width - 1) as f64),
            (hi.y + margin).ceil().min((height - 1) as f64),
        );
        if x0 > x1 || y0 > y1 {
            return Ok(None);
        }
        Ok(Some([x0 as usize, x1 as usize, y0 as usize, y1 as usize]))
    }
}

fn box_contains(b: &[f64; 4], x: f64, y: f64) -> bool {
    x >= b[0] && x <= b[1] && y >= b[2] && y <= b[3]
}

/// Render `scene` into a `width × height` image and report the exact
/// junction contour points.
///
/// Pixel `(i, j)` covers `[i − ½, i + ½] × [j − ½, j + ½]`; each pixel that
/// may touch a scene element averages a 4 × 4 grid of ray-cast samples.
/// Blur is applied before noise; noise is clamped to `[0, 1]`.
pub fn render(
    scene: &SceneSpec,
    camera: &CameraModel,
    width: usize,
    height: usize,
) -> Result<(RasterImage, GroundTruth), SyntheticError> {
    scene.validate()?;
    if width == 0 || height == 0 {
        return Err(SyntheticError::InvalidScene("empty image".into()));
    }
    let renderer = Renderer {
        scene,
        camera,
        surface: Surface::new(scene),
        center: camera.center(),
        world_from_camera: camera.rotation().transpose(),
    };
    let mut boxes: Vec<[f64; 4]> = Vec::new();
    if let Some(b) = renderer.pointer_box(width, height)? {
        boxes.push(b.map(|v| v as f64));
    }
    for d in &scene.distractors {
        let r = d.radius_px + 1.0;
        boxes.push([d.center[0] - r, d.center[0] + r, d.center[1] - r, d.center[1] + r]);
    }
    for o in &scene.occluders {
        boxes.push([o.x0 - 1.0, o.x1 + 1.0, o.y0 - 1.0, o.y1 + 1.0]);
    }

    let n = SUPERSAMPLING;
    let offsets: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64 - 0.5).collect();
    let weight = 1.0 / (n * n) as f32;
    let rows: Vec<(Vec<[f32; 3]>, Vec<u8>)> = (0..height)
        .into_par_iter()
        .map(|y| {
            let mut pixels = vec![scene.background; width];
            let mut labels = vec![0u8; width];
            let yf = y as f64;
            let row_boxes: Vec<&[f64; 4]> = boxes.iter().filter(|b| yf >= b[2] && yf <= b[3]).collect();
            if row_boxes.is_empty() {
                return (pixels, labels);
            }
            for x in 0..width {
                let xf = x as f64;
                if !row_boxes.iter().any(|b| box_contains(b, xf, yf)) {
                    continue;
                }
                let mut acc = [0f32; 3];
                for dy in &offsets {
                    for dx in &offsets {
                        let c = renderer.color(xf + dx, yf + dy);
                        for ch in 0..3 {
                            acc[ch] += c[ch] * weight;
                        }
                    }
                }
                pixels[x] = acc.map(|v| v.clamp(0.0, 1.0));
                labels[x] = renderer.label(xf, yf);
            }
            (pixels, labels)
        })
        .collect();
    let mut pixels = Vec::with_capacity(width * height);
    let mut mask = Vec::with_capacity(width * height);
    for (p, l) in rows {
        pixels.extend(p);
        mask.extend(l);
    }
    let mut img = RasterImage::new(width, height, pixels)?;
    if scene.blur_sigma_px > 0.0 {
        img = gaussian_blur(&img, scene.blur_sigma_px);
    }
    if scene.noise_sigma > 0.0 {
        add_noise(&mut img, scene.noise_sigma, scene.seed);
    }
    let band_mask = GrayImage {
        width,
        height,
        data: mask,
    };
    let truth = truth::build(scene, camera, width, height, band_mask)?;
    Ok((img, truth))
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter().map(|v| (v / sum) as f32).collect()
}

/// Separable Gaussian blur with edge clamping; kernel radius ⌈3σ⌉.
pub fn gaussian_blur(img: &RasterImage, sigma: f64) -> RasterImage {
    if !(sigma > 0.0) {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();
    let horizontal: Vec<[f32; 3]> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let row = &src[y * w..(y + 1) * w];
            let k = &k;
            (0..w).map(move |x| {
                let mut acc = [0f32; 3];
                for (i, kv) in k.iter().enumerate() {
                    let sx = (x as i64 + i as i64 - r).clamp(0, w as i64 - 1) as usize;
                    for ch in 0..3 {
                        acc[ch] += kv * row[sx][ch];
                    }
                }
                acc
            })
        })
        .collect();
    let out: Vec<[f32; 3]> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let horizontal = &horizontal;
            let k = &k;
            (0..w).map(move |x| {
                let mut acc = [0f32; 3];
                for (i, kv) in k.iter().enumerate() {
                    let sy = (y as i64 + i as i64 - r).clamp(0, h as i64 - 1) as usize;
                    for ch in 0..3 {
                        acc[ch] += kv * horizontal[sy * w + x][ch];
                    }
                }
                acc.map(|v| v.clamp(0.0, 1.0))
            })
        })
        .collect();
    RasterImage::new(w, h, out).expect("blur preserves size and range")
}

fn add_noise(img: &mut RasterImage, sigma: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    for px in img.pixels_mut() {
        for c in px.iter_mut() {
            *c = (*c as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{project_pointer_edges, PointerPose};
    use crate::synthetic::{camera, grid_pose, pointer_spec, Distractor, Occluder, RED};

    const W: usize = 2448;
    const H: usize = 2048;

    fn same_color(a: [f32; 3], b: [f32; 3]) -> bool {
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-5)
    }

    #[test]
    fn ground_truth_matches_pose_projection() {
        let cam = camera();
        let spec = pointer_spec();
        for (z, a) in [(400.0, 0.0), (520.0, 35.0), (610.0, 71.0)] {
            let scene = SceneSpec::new(grid_pose(z, a), spec.clone());
            let gt = truth::ground_truth_points(&scene.pose, &spec, &cam).unwrap();
            let edges: Vec<usize> = (0..spec.len()).collect();
            let pp = project_pointer_edges(&scene.pose, &cam, &spec, &edges).unwrap();
            for (g, p) in gt.iter().zip(&pp) {
                assert!((g[0] - p[0]).norm() < 1e-9 && (g[1] - p[1]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn ray_hits_cylinder_at_expected_axial_position() {
        let scene = SceneSpec::new(PointerPose::new(Vector3::new(0.0, 0.0, 500.0), Vector3::x()), pointer_spec());
        let sf = Surface::new(&scene);
        // Ray through the axis at x = 100 mm hits the front of the cylinder.
        let s = sf.hit(&Vector3::new(100.0, 0.0, 0.0), &Vector3::z()).unwrap();
        assert!((s - 100.0).abs() < 1e-9);
        // Grazing just outside the radius misses.
        assert!(sf.hit(&Vector3::new(100.0, 3.01, 0.0), &Vector3::z()).is_none());
        assert!(sf.hit(&Vector3::new(100.0, 2.99, 0.0), &Vector3::z()).is_some());
        // Beyond the tail misses.
        assert!(sf.hit(&Vector3::new(260.0, 0.0, 0.0), &Vector3::z()).is_none());
        // Along the axis the tip cap is hit first.
        let s = sf.hit(&Vector3::new(-50.0, 0.0, 500.0), &Vector3::x()).unwrap();
        assert!(s.abs() < 1e-9);
    }

    #[test]
    fn rendered_bands_follow_ground_truth() {
        let cam = camera();
        let scene = SceneSpec::new(grid_pose(500.0, 0.0), pointer_spec());
        let (img, gt) = render(&scene, &cam, W, H).unwrap();
        assert!(gt.visible.iter().all(|&v| v));
        // Midway between the contour points of edge 0, just toward the tip,
        // the first band (red) is fully covered.
        let spec = pointer_spec();
        let mid_tip = scene.pose.point_at(spec.edges()[0].distance_mm - 5.0);
        let p = cam.project(&mid_tip).unwrap();
        let (x, y) = (p.x.round() as usize, p.y.round() as usize);
        assert!(same_color(img.get(x, y), RED));
        assert_eq!(gt.band_mask.data[y * W + x], 1);
        assert!(same_color(img.get(10, 10), scene.background));
        // Band mask area roughly matches the projected silhouette area.
        let area = gt.band_mask.data.iter().filter(|&&v| v != 0).count() as f64;
        let expected = 2400.0 / 500.0 * 251.0 * 2400.0 / 500.0 * 6.0;
        assert!((area / expected - 1.0).abs() < 0.05, "{area} vs {expected}");
    }

    #[test]
    fn silhouette_coverage_at_contour_points() {
        // Antialiased coverage at a ground-truth contour point is about one half.
        let cam = camera();
        let scene = SceneSpec::new(grid_pose(450.0, 20.0), pointer_spec());
        let (img, gt) = render(&scene, &cam, W, H).unwrap();
        let bg = scene.background[0] as f64;
        let hs = crate::imaging::rgb_to_hue_saturation(&img);
        for k in [1, 4, 7] {
            for p in gt.points[k] {
                // Just toward the tip side of the junction.
                let toward_tip = (gt.points[k - 1][0] + gt.points[k - 1][1]) / 2.0 - (gt.points[k][0] + gt.points[k][1]) / 2.0;
                let q = p + toward_tip.normalize() * 2.0;
                let chroma = hs.chroma_at(q.x, q.y).unwrap();
                let band = scene.color_of(scene.spec.band_labels()[k]).unwrap();
                let full = (band.iter().cloned().fold(0f32, f32::max) - band.iter().cloned().fold(1f32, f32::min)) as f64;
                assert!((chroma / full - 0.5).abs() < 0.2, "edge {k}: {chroma} of {full} (bg {bg})");
            }
        }
    }

    #[test]
    fn occluder_flags_and_distractors() {
        let cam = camera();
        let mut scene = SceneSpec::new(grid_pose(500.0, 10.0), pointer_spec());
        let gt0 = truth::ground_truth_points(&scene.pose, &scene.spec, &cam).unwrap();
        let p = gt0[3];
        scene.occluders.push(Occluder {
            x0: p[0].x.min(p[1].x) - 20.0,
            x1: p[0].x.max(p[1].x) + 20.0,
            y0: p[0].y.min(p[1].y) - 20.0,
            y1: p[0].y.max(p[1].y) + 20.0,
            rgb: [0.4, 0.4, 0.4],
        });
        // Covers only one point of edge 6.
        let q = gt0[6][0];
        scene.occluders.push(Occluder {
            x0: q.x - 3.0,
            x1: q.x + 3.0,
            y0: q.y - 3.0,
            y1: q.y + 3.0,
            rgb: [0.4, 0.4, 0.4],
        });
        scene.distractors.push(Distractor {
            center: [200.0, 1800.0],
            radius_px: 30.0,
            rgb: RED,
        });
        let (img, gt) = render(&scene, &cam, W, H).unwrap();
        for (k, &o) in gt.occluded.iter().enumerate() {
            assert_eq!(o, k == 3, "edge {k}");
            assert_eq!(gt.visible[k], k != 3);
        }
        assert!(same_color(img.get(200, 1800), RED));
        assert!(same_color(img.get(q.x.round() as usize, q.y.round() as usize), [0.4, 0.4, 0.4]));
        assert_eq!(gt.band_mask.data[1800 * W + 200], 0);
    }

    #[test]
    fn rendering_is_deterministic() {
        let cam = camera();
        let mut scene = SceneSpec::new(grid_pose(550.0, 45.0), pointer_spec());
        scene.noise_sigma = 0.02;
        scene.blur_sigma_px = 1.5;
        scene.seed = 11;
        let (a, _) = render(&scene, &cam, 640, 480).unwrap();
        let (b, _) = render(&scene, &cam, 640, 480).unwrap();
        assert_eq!(a, b);
        scene.seed = 12;
        let (c, _) = render(&scene, &cam, 640, 480).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn blur_preserves_mean_and_constant_images() {
        let flat = RasterImage::filled(50, 40, [0.2, 0.4, 0.6]).unwrap();
        let b = gaussian_blur(&flat, 2.0);
        for px in b.pixels() {
            for (c, e) in px.iter().zip([0.2, 0.4, 0.6]) {
                assert!((c - e).abs() < 1e-5);
            }
        }
        // A centered impulse spreads with the requested standard deviation.
        let mut pixels = vec![[0f32; 3]; 61 * 61];
        pixels[30 * 61 + 30] = [1.0; 3];
        let img = RasterImage::new(61, 61, pixels).unwrap();
        let b = gaussian_blur(&img, 3.0);
        let (mut m, mut v) = (0.0, 0.0);
        for y in 0..61 {
            for x in 0..61 {
                let w = b.get(x, y)[0] as f64;
                m += w;
                v += w * ((x as f64 - 30.0).powi(2));
            }
        }
        assert!((m - 1.0).abs() < 1e-4);
        assert!((v.sqrt() - 3.0).abs() < 0.05, "{}", v.sqrt());
    }

    #[test]
    fn behind_camera_is_rejected() {
        let cam = camera();
        let scene = SceneSpec::new(PointerPose::new(Vector3::new(0.0, 0.0, -500.0), Vector3::x()), pointer_spec());
        assert!(matches!(render(&scene, &cam, 64, 64), Err(SyntheticError::BehindCamera)));
    }

    #[test]
    fn mask_labels_are_band_labels() {
        let cam = camera();
        let scene = SceneSpec::new(grid_pose(600.0, 30.0), pointer_spec());
        let (_, gt) = render(&scene, &cam, W, H).unwrap();
        let mut seen: Vec<u8> = gt.band_mask.data.iter().copied().filter(|&v| v != 0).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, vec![1, 2, 3]);
    }
}
