use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dp::{label_match_score, Alignment};
use super::{AssociationError, Homography1D, Orientation, PointerSpec, SideLabels};

/// Triplets are enumerated exhaustively up to this count, sampled beyond it.
pub const MAX_TRIPLETS: usize = 1000;

/// A data-association hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// `(detected edge index, pointer edge index)` for inlier edges, in
    /// increasing detected order.
    pub pairs: Vec<(usize, usize)>,
    pub homography: Homography1D,
    /// One flag per detected edge.
    pub inliers: Vec<bool>,
    pub orientation: Orientation,
    /// Index of the generating triplet, for deterministic ordering.
    pub triplet_index: usize,
}

impl Correspondence {
    pub fn inlier_count(&self) -> usize {
        self.pairs.len()
    }
}

/// Reciprocal-nearest-neighbor matches in mm between mapped detected
/// coordinates and the spec edges, keeping only label-consistent pairs.
/// Returns `(detected, spec)` pairs in increasing detected order.
pub fn count_inliers(
    h: &Homography1D,
    axis: &[f64],
    labels: &[SideLabels],
    spec: &PointerSpec,
    orientation: Orientation,
) -> Vec<(usize, usize)> {
    let mapped: Vec<f64> = axis.iter().map(|&t| h.apply(t)).collect();
    let b: Vec<f64> = spec.edges().iter().map(|e| e.distance_mm).collect();
    let nearest = |x: f64, set: &[f64]| {
        let mut best = 0;
        for (k, &y) in set.iter().enumerate() {
            if (x - y).abs() < (x - set[best]).abs() {
                best = k;
            }
        }
        best
    };
    let mut out = Vec::new();
    for (i, &m) in mapped.iter().enumerate() {
        if !m.is_finite() {
            continue;
        }
        let k = nearest(m, &b);
        if nearest(b[k], &mapped) != i {
            continue;
        }
        if label_match_score(labels[i], orientation.oriented(spec.side_labels()[k])) != Some(1) {
            continue;
        }
        out.push((i, k));
    }
    out
}

fn triplets_of(len: usize) -> usize {
    if len < 3 {
        0
    } else {
        len * (len - 1) * (len - 2) / 6
    }
}

/// The `rank`-th 3-combination of `0..len` in lexicographic order.
fn unrank(mut rank: usize, len: usize) -> [usize; 3] {
    let mut out = [0; 3];
    let mut start = 0;
    for (slot, o) in out.iter_mut().enumerate() {
        let left = 2 - slot;
        let mut i = start;
        loop {
            let block = binom(len - i - 1, left);
            if rank < block {
                break;
            }
            rank -= block;
            i += 1;
        }
        *o = i;
        start = i + 1;
    }
    out
}

fn binom(n: usize, k: usize) -> usize {
    match k {
        0 => 1,
        1 => n,
        2 => n * n.saturating_sub(1) / 2,
        _ => unreachable!(),
    }
}

/// RANSAC over triplets of aligned pairs.
///
/// `axis` are detected coordinates along L₂ (sorted), `labels` their side
/// labels. All hypotheses tied at the maximal inlier count are returned,
/// ordered by triplet index and deduplicated by their inlier pairing.
pub fn associate_ransac(
    axis: &[f64],
    labels: &[SideLabels],
    spec: &PointerSpec,
    alignments: &[Alignment],
    seed: u64,
) -> Result<Vec<Correspondence>, AssociationError> {
    assert_eq!(axis.len(), labels.len(), "one label pair per detected edge");
    let counts: Vec<usize> = alignments.iter().map(|a| triplets_of(a.pairs.len())).collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        let best = alignments.iter().map(|a| a.pairs.len()).max().unwrap_or(0);
        return Err(AssociationError::InsufficientMatches(best));
    }
    let locate = |mut g: usize| {
        for (ai, &c) in counts.iter().enumerate() {
            if g < c {
                return (ai, unrank(g, alignments[ai].pairs.len()));
            }
            g -= c;
        }
        unreachable!()
    };
    let samples: Vec<(usize, [usize; 3])> = if total <= MAX_TRIPLETS {
        (0..total).map(locate).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..MAX_TRIPLETS).map(|_| locate(rng.random_range(0..total))).collect()
    };
    let (lo, hi) = axis
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &t| (l.min(t), u.max(t)));

    let evaluated: Vec<Option<Correspondence>> = samples
        .par_iter()
        .enumerate()
        .map(|(idx, &(ai, tri))| {
            let al = &alignments[ai];
            let pts = tri.map(|k| {
                let (d, s) = al.pairs[k];
                (axis[d], spec.edges()[s].distance_mm)
            });
            let h = Homography1D::fit(pts).ok()?;
            if !h.is_monotone_on(lo, hi) {
                return None;
            }
            let orientation = if h.orientation() > 0.0 {
                Orientation::Forward
            } else {
                Orientation::Reversed
            };
            if orientation != al.orientation {
                return None;
            }
            let pairs = count_inliers(&h, axis, labels, spec, orientation);
            let monotone = pairs.windows(2).all(|w| match orientation {
                Orientation::Forward => w[1].1 > w[0].1,
                Orientation::Reversed => w[1].1 < w[0].1,
            });
            if !monotone {
                return None;
            }
            let mut inliers = vec![false; axis.len()];
            for &(d, _) in &pairs {
                inliers[d] = true;
            }
            Some(Correspondence {
                pairs,
                homography: h,
                inliers,
                orientation,
                triplet_index: idx,
            })
        })
        .collect();

    let best = evaluated
        .iter()
        .flatten()
        .map(Correspondence::inlier_count)
        .max()
        .unwrap_or(0);
    if best < 3 {
        return Err(AssociationError::NoAssociation);
    }
    let mut seen = BTreeSet::new();
    let out = evaluated
        .into_iter()
        .flatten()
        .filter(|c| c.inlier_count() == best)
        .filter(|c| seen.insert((c.orientation == Orientation::Forward, c.pairs.clone())))
        .collect();
    Ok(out)
}
