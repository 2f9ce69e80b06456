use nalgebra::{DMatrix, DVector, Vector2};

use super::{make_pair, DetectionParams, DetectionResult, EdgePointPair};
use crate::geometry::Line2;
use crate::imaging::{HueSatImage, RasterImage};

const STEP: f64 = 0.25;
const MIN_CONTRAST: f64 = 0.05;
/// Chord offsets, as fractions of the half-width, of the lines scanned for
/// the junction arc.
const ARC_FRACTIONS: [f64; 9] = [0.0, -0.25, 0.25, -0.45, 0.45, -0.6, 0.6, -0.75, 0.75];
const MIN_COLOR_STEP: f64 = 0.1;

/// Move each contour point onto the silhouette end of its junction.
///
/// The junction halo only brackets the junction, so three steps follow:
///
/// 1. Each point slides along the L₂ normal to the silhouette, found where
///    chroma (linear in coverage against an achromatic background) crosses
///    halfway between the background and interior levels.
/// 2. The visible half of each junction circle images as a half ellipse
///    whose ends are the contour points. Its colour change is located on
///    lines parallel to L₂ at several offsets `f` between the silhouettes,
///    and the model `t(f) = c + m·f + s·√(1 − f²)` is fitted jointly over
///    all junctions, with `c` and `m` free per junction and `s/half-width`
///    a low-order polynomial along the axis. The points move to the arc
///    ends `c ∓ m`.
/// 3. Step 1 is repeated at the new positions, scanning on the side of
///    each junction away from its arc, and step 2 and 3 run once more.
///
/// Points without a clean measurement stay put, as do pairs that would end
/// up closer than `e`. L₂ and the axis coordinates are refit after each step.
pub fn refine_contour_points(result: &mut DetectionResult, img: &RasterImage, hs: &HueSatImage, params: &DetectionParams) {
    if !params.refine_contours || result.edges.is_empty() {
        return;
    }
    let e = params.halo() as f64;
    refine_silhouettes(result, hs, e);
    // The first silhouette pass cannot tell which side of each junction is
    // clean, so the arcs are fitted twice.
    for _ in 0..2 {
        let Some(arcs) = fit_junction_arcs(result, img) else { return };
        let l2 = result.l2;
        for (edge, arc) in result.edges.iter_mut().zip(&arcs) {
            let Some(arc) = arc else {
                edge.bulge = 0.0;
                continue;
            };
            let (xa, xb) = (l2.signed_distance(edge.p_a), l2.signed_distance(edge.p_b));
            let x0 = (xa + xb) / 2.0;
            let half = (xb - xa).abs() / 2.0;
            let place = |x: f64| {
                let f = if half > 0.0 { (x - x0) / half } else { 0.0 };
                l2.at(arc.chord + arc.tilt * f) + l2.normal() * x
            };
            edge.p_a = place(xa);
            edge.p_b = place(xb);
            edge.axis_coordinate = arc.chord;
            edge.bulge = arc.apex;
        }
        refine_silhouettes(result, hs, e);
    }
}

fn refine_silhouettes(result: &mut DetectionResult, hs: &HueSatImage, e: f64) {
    let l2 = result.l2;
    let mut pairs = Vec::with_capacity(result.edges.len());
    for edge in &result.edges {
        let orig = [edge.p_a, edge.p_b];
        // Blur mixes the two band colours along the arc, and mixtures have
        // low chroma. The arc leaves each end on the bulge side, so the scan
        // runs at an axial offset `e` on the other side; both sides are
        // averaged while the bulge is unknown.
        let offsets: &[f64] = if edge.bulge.abs() >= 1.0 {
            &[-edge.bulge.signum()]
        } else {
            &[-1.0, 1.0]
        };
        let refined = orig.map(|p| {
            let found: Vec<Vector2<f64>> = offsets
                .iter()
                .filter_map(|&side| {
                    let shift = l2.dir * (side * e);
                    settle_point(p + shift, &l2, hs, e).map(|q| q - shift)
                })
                .collect();
            if found.is_empty() {
                p
            } else {
                found.iter().sum::<Vector2<f64>>() / found.len() as f64
            }
        });
        if (refined[1] - refined[0]).norm() >= e {
            pairs.push(refined);
        } else {
            pairs.push(orig);
        }
    }
    let Some(new_l2) = Line2::fit(pairs.iter().flat_map(|p| p.iter().copied())) else {
        return;
    };
    let flip = new_l2.dir.dot(&l2.dir) < 0.0;
    for (edge, p) in result.edges.iter_mut().zip(&pairs) {
        let (l, r) = if flip {
            (edge.right_label, edge.left_label)
        } else {
            (edge.left_label, edge.right_label)
        };
        let bulge = if flip { -edge.bulge } else { edge.bulge };
        *edge = EdgePointPair {
            bulge,
            ..make_pair(&new_l2, p[0], p[1], l, r)
        };
    }
    result.l2 = new_l2;
    result.edges.sort_by(|a, b| a.axis_coordinate.total_cmp(&b.axis_coordinate));
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

/// Repeat the silhouette scan from each new estimate, since the background
/// window is placed relative to the current point.
fn settle_point(p: Vector2<f64>, l2: &Line2, hs: &HueSatImage, e: f64) -> Option<Vector2<f64>> {
    let mut cur = refine_point(p, l2, hs, e)?;
    for _ in 0..3 {
        let Some(next) = refine_point(cur, l2, hs, e) else { break };
        let moved = (next - cur).norm();
        cur = next;
        if moved < 0.02 {
            break;
        }
    }
    Some(cur)
}

fn refine_point(p: Vector2<f64>, l2: &Line2, hs: &HueSatImage, e: f64) -> Option<Vector2<f64>> {
    let d = l2.signed_distance(p);
    let half = d.abs();
    if half < 1.0 {
        return None;
    }
    let normal = l2.normal() * d.signum();
    let base = l2.at(l2.coordinate(p));
    let outer = half + 2.0 * e;
    let steps = (outer / STEP).ceil() as usize;
    // Samples from the outside inward.
    let mut samples = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let s = outer - i as f64 * STEP;
        let q = base + normal * s;
        samples.push((s, hs.chroma_at(q.x, q.y)?));
    }
    let mut bg: Vec<f64> = samples
        .iter()
        .filter(|(s, _)| *s >= half + e)
        .map(|&(_, c)| c)
        .collect();
    let mut inner: Vec<f64> = samples
        .iter()
        .filter(|(s, _)| *s <= 0.5 * half)
        .map(|&(_, c)| c)
        .collect();
    let bg = median(&mut bg)?;
    let inner = median(&mut inner)?;
    if inner - bg < MIN_CONTRAST {
        return None;
    }
    let thr = 0.5 * (inner + bg);
    for w in samples.windows(2) {
        let ((s0, c0), (s1, c1)) = (w[0], w[1]);
        if c0 < thr && c1 >= thr {
            let s = s0 + (thr - c0) / (c1 - c0) * (s1 - s0);
            return Some(base + normal * s);
        }
    }
    None
}

fn rgb_at(img: &RasterImage, p: Vector2<f64>) -> Option<[f64; 3]> {
    let (w, h) = (img.width(), img.height());
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f64 && p.y <= (h - 1) as f64) {
        return None;
    }
    let (x0, y0) = (p.x.floor() as usize, p.y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (p.x - x0 as f64, p.y - y0 as f64);
    let px = |x, y| img.get(x, y).map(f64::from);
    let (a, b, c, d) = (px(x0, y0), px(x1, y0), px(x0, y1), px(x1, y1));
    Some(std::array::from_fn(|i| {
        (a[i] * (1.0 - fx) + b[i] * fx) * (1.0 - fy) + (c[i] * (1.0 - fx) + d[i] * fx) * fy
    }))
}

/// Position of the single colour change in an RGB profile: the split
/// minimising the two-segment squared error, refined to where the colour
/// passes halfway between the two segment levels.
fn color_change(profile: &[[f64; 3]]) -> Option<f64> {
    let n = profile.len();
    let min_len = (1.5 / STEP) as usize;
    if n < 2 * min_len + 2 {
        return None;
    }
    let mut sum = vec![[0.0; 3]; n + 1];
    let mut sq = vec![0.0; n + 1];
    for (i, c) in profile.iter().enumerate() {
        sum[i + 1] = std::array::from_fn(|k| sum[i][k] + c[k]);
        sq[i + 1] = sq[i] + c.iter().map(|v| v * v).sum::<f64>();
    }
    let sse = |a: usize, b: usize| {
        let m = (b - a) as f64;
        let s: f64 = (0..3).map(|k| (sum[b][k] - sum[a][k]).powi(2)).sum();
        sq[b] - sq[a] - s / m
    };
    let split = (min_len..=n - min_len).min_by(|&i, &j| (sse(0, i) + sse(i, n)).total_cmp(&(sse(0, j) + sse(j, n))))?;
    // Medians ignore the blurred ramp as long as it covers less than half
    // of each segment.
    let level = |seg: &[[f64; 3]]| -> [f64; 3] {
        std::array::from_fn(|k| {
            let mut v: Vec<f64> = seg.iter().map(|c| c[k]).collect();
            median(&mut v).unwrap_or(0.0)
        })
    };
    let (ml, mr) = (level(&profile[..split]), level(&profile[split..]));
    let delta: [f64; 3] = std::array::from_fn(|k| mr[k] - ml[k]);
    let d2: f64 = delta.iter().map(|v| v * v).sum();
    if d2.sqrt() < MIN_COLOR_STEP {
        return None;
    }
    let proj = |c: &[f64; 3]| (0..3).map(|k| (c[k] - ml[k]) * delta[k]).sum::<f64>() / d2;
    // Nearest halfway crossing to the split.
    let values: Vec<f64> = profile.iter().map(|c| proj(c) - 0.5).collect();
    let mut best: Option<(f64, f64)> = None;
    for (i, w) in values.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        if a == 0.0 || a.signum() != b.signum() {
            let pos = i as f64 + if a == b { 0.0 } else { a / (a - b) };
            let dist = (pos - split as f64).abs();
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((pos, dist));
            }
        }
    }
    best.map(|(pos, _)| pos)
}

struct ArcSample {
    edge: usize,
    f: f64,
    t: f64,
}

/// Junction arc in L₂ coordinates: axis coordinate
/// `chord + tilt·f + apex·√(1 − f²)` at normalized offset `f ∈ [−1, 1]`
/// between the silhouettes. Every ellipse has this form.
#[derive(Debug, Clone, Copy)]
struct JunctionArc {
    chord: f64,
    tilt: f64,
    apex: f64,
}

impl JunctionArc {
    fn at(&self, f: f64) -> f64 {
        let f = f.clamp(-1.0, 1.0);
        self.chord + self.tilt * f + self.apex * (1.0 - f * f).sqrt()
    }
}

/// Jointly fitted arcs per edge, `None` where an edge had too few samples.
/// The scan windows are first centred on the chords, then on the arcs of a
/// first fit, since a strongly bulging arc can leave a chord-centred window.
fn fit_junction_arcs(result: &DetectionResult, img: &RasterImage) -> Option<Vec<Option<JunctionArc>>> {
    let l2 = result.l2;
    let ts: Vec<f64> = result.edges.iter().map(|e| e.axis_coordinate).collect();
    let spans: Vec<(f64, f64)> = result
        .edges
        .iter()
        .map(|e| {
            let (xa, xb) = (l2.signed_distance(e.p_a), l2.signed_distance(e.p_b));
            ((xa + xb) / 2.0, (xb - xa).abs() / 2.0)
        })
        .collect();
    let first = solve_arcs(&sample_arcs(&l2, &spans, img, |k, _| ts[k]), &ts, &spans)?;
    let centre = |k: usize, x: f64| {
        let (x0, a) = spans[k];
        first[k].map_or(ts[k], |arc| arc.at(if a > 0.0 { (x - x0) / a } else { 0.0 }))
    };
    Some(solve_arcs(&sample_arcs(&l2, &spans, img, centre), &ts, &spans).unwrap_or(first))
}

/// Colour changes along lines parallel to L₂ at each arc fraction, each
/// searched between the midpoints to the neighbouring arcs. `centre(k, x)`
/// is the expected axis coordinate of arc `k` at distance `x` from L₂.
fn sample_arcs(l2: &Line2, spans: &[(f64, f64)], img: &RasterImage, centre: impl Fn(usize, f64) -> f64) -> Vec<ArcSample> {
    let n = spans.len();
    let mut samples = Vec::new();
    for (k, &(x0, a)) in spans.iter().enumerate() {
        if a < 2.0 {
            continue;
        }
        for f in ARC_FRACTIONS {
            let x = x0 + f * a;
            let t = centre(k, x);
            let prev = (k > 0).then(|| centre(k - 1, x));
            let next = (k + 1 < n).then(|| centre(k + 1, x));
            let (lo, hi) = match (prev, next) {
                (Some(p), Some(q)) => ((p + t) / 2.0, (t + q) / 2.0),
                (Some(p), None) => ((p + t) / 2.0, t + (t - p) / 2.0),
                (None, Some(q)) => (t - (q - t) / 2.0, (t + q) / 2.0),
                (None, None) => (t - 2.0 * a, t + 2.0 * a),
            };
            if !(hi > lo) {
                continue;
            }
            let count = ((hi - lo) / STEP).floor() as usize + 1;
            let base = l2.at(lo) + l2.normal() * x;
            let profile: Option<Vec<[f64; 3]>> = (0..count).map(|i| rgb_at(img, base + l2.dir * (i as f64 * STEP))).collect();
            let Some(profile) = profile else { continue };
            if let Some(pos) = color_change(&profile) {
                samples.push(ArcSample { edge: k, f, t: lo + pos * STEP });
            }
        }
    }
    samples
}

/// Joint least squares for all arcs: chord and tilt free per edge, apex
/// over half-width a polynomial in the axis coordinate. One round of
/// outlier rejection.
fn solve_arcs(samples: &[ArcSample], ts: &[f64], spans: &[(f64, f64)]) -> Option<Vec<Option<JunctionArc>>> {
    let n = ts.len();
    let halves: Vec<f64> = spans.iter().map(|s| s.1).collect();
    let mut counts = vec![0usize; n];
    for s in samples {
        counts[s.edge] += 1;
    }
    let mut active: Vec<bool> = counts.iter().map(|&c| c >= 4).collect();
    let mut keep: Vec<bool> = samples.iter().map(|s| active[s.edge]).collect();
    if n == 0 {
        return None;
    }
    let (t_mid, t_half) = {
        let (lo, hi) = (ts[0], ts[n - 1]);
        ((lo + hi) / 2.0, ((hi - lo) / 2.0).max(1.0))
    };
    let mut solution = None;
    for _round in 0..2 {
        let fitted: Vec<usize> = (0..n).filter(|&k| active[k]).collect();
        let terms = match fitted.len() {
            0 => return None,
            1..=2 => 1,
            3..=5 => 2,
            _ => 3,
        };
        let mut col = vec![None; n];
        for (i, &k) in fitted.iter().enumerate() {
            col[k] = Some(2 * i);
        }
        let rows: Vec<&ArcSample> = samples.iter().zip(&keep).filter(|(_, &k)| k).map(|(s, _)| s).collect();
        let shared = 2 * fitted.len();
        let unknowns = shared + terms;
        if rows.len() < unknowns + 2 {
            return None;
        }
        let mut a = DMatrix::zeros(rows.len(), unknowns);
        let mut b = DVector::zeros(rows.len());
        for (r, s) in rows.iter().enumerate() {
            let tau = (ts[s.edge] - t_mid) / t_half;
            let c = col[s.edge]?;
            a[(r, c)] = 1.0;
            a[(r, c + 1)] = s.f;
            let g = (1.0 - s.f * s.f).sqrt();
            for j in 0..terms {
                a[(r, shared + j)] = halves[s.edge] * g * tau.powi(j as i32);
            }
            b[r] = s.t;
        }
        let x = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
        let resid = &a * &x - &b;
        let rms = (resid.norm_squared() / rows.len() as f64).sqrt();
        let limit = (3.0 * rms).max(1.0);
        let mut dropped = false;
        for (k, r) in keep.iter_mut().filter(|k| **k).zip(resid.iter()) {
            if r.abs() > limit {
                *k = false;
                dropped = true;
            }
        }
        let ratio = |k: usize| -> f64 {
            let tau = (ts[k] - t_mid) / t_half;
            (0..terms).map(|j| x[shared + j] * tau.powi(j as i32)).sum()
        };
        solution = Some(
            (0..n)
                .map(|k| {
                    let c = col[k]?;
                    let arc = JunctionArc {
                        chord: x[c],
                        tilt: x[c + 1],
                        apex: halves[k] * ratio(k),
                    };
                    // A chord far outside the halo bracket means a bad fit.
                    ((arc.chord - ts[k]).abs() + arc.tilt.abs() <= halves[k] + 2.0).then_some(arc)
                })
                .collect::<Vec<_>>(),
        );
        if !dropped {
            break;
        }
        let mut counts = vec![0usize; n];
        for (s, &k) in samples.iter().zip(&keep) {
            if k {
                counts[s.edge] += 1;
            }
        }
        for k in 0..n {
            active[k] = active[k] && counts[k] >= 4;
        }
        for (s, k) in samples.iter().zip(keep.iter_mut()) {
            *k = *k && active[s.edge];
        }
    }
    solution
}
