use super::{AssociationError, Orientation, PointerSpec, SideLabels};

/// Cap on the number of distinct optimal alignments returned.
pub const MAX_ALIGNMENTS: usize = 32;

/// One optimal label alignment: `(detected index, spec edge index)` pairs in
/// increasing detected order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub orientation: Orientation,
    pub pairs: Vec<(usize, usize)>,
    pub score: usize,
}

/// Score of matching a detected edge to a spec edge whose labels are already
/// oriented: `None` when a defined detected label contradicts the spec, 1
/// when at least one label agrees, 0 when the detected edge has no labels.
pub fn label_match_score(detected: SideLabels, spec: SideLabels) -> Option<usize> {
    let mut score = 0;
    for (d, s) in [(detected.left, spec.left), (detected.right, spec.right)] {
        if let Some(d) = d {
            if s != Some(d) {
                return None;
            }
            score = 1;
        }
    }
    Some(score)
}

fn table(detected: &[SideLabels], spec: &[SideLabels]) -> Vec<Vec<usize>> {
    let (n, m) = (detected.len(), spec.len());
    let mut best = vec![vec![0usize; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            let mut v = best[i - 1][j].max(best[i][j - 1]);
            if let Some(s) = label_match_score(detected[i - 1], spec[j - 1]) {
                v = v.max(best[i - 1][j - 1] + s);
            }
            best[i][j] = v;
        }
    }
    best
}

/// All distinct sets of positive-score matches achieving `need` within the
/// prefixes `detected[..i]`, `spec[..j]`. Each set is produced exactly once by
/// recursing on its last match.
fn enumerate(
    best: &[Vec<usize>],
    detected: &[SideLabels],
    spec: &[SideLabels],
    i: usize,
    j: usize,
    need: usize,
    suffix: &mut Vec<(usize, usize)>,
    out: &mut Vec<Vec<(usize, usize)>>,
    cap: usize,
) {
    if out.len() >= cap {
        return;
    }
    if need == 0 {
        let mut pairs = suffix.clone();
        pairs.reverse();
        out.push(pairs);
        return;
    }
    for a in (0..i).rev() {
        for b in (0..j).rev() {
            if best[a][b] + 1 != need {
                continue;
            }
            if label_match_score(detected[a], spec[b]) != Some(1) {
                continue;
            }
            suffix.push((a, b));
            enumerate(best, detected, spec, a, b, need - 1, suffix, out, cap);
            suffix.pop();
            if out.len() >= cap {
                return;
            }
        }
    }
}

/// Globally optimal label alignments against the pattern and its reversal.
///
/// Gaps cost nothing and mismatches are forbidden; every alignment achieving
/// the best score in either orientation is returned (forward first), up to
/// [`MAX_ALIGNMENTS`].
pub fn align_labels_dp(detected: &[SideLabels], spec: &PointerSpec) -> Result<Vec<Alignment>, AssociationError> {
    if detected.is_empty() {
        return Err(AssociationError::NoAssociation);
    }
    let n = spec.len();
    let forward = spec.side_labels().to_vec();
    let reversed = spec.reversed_side_labels();
    let fwd_best = table(detected, &forward);
    let rev_best = table(detected, &reversed);
    let fwd_score = fwd_best[detected.len()][n];
    let rev_score = rev_best[detected.len()][n];
    let top = fwd_score.max(rev_score);
    if top == 0 {
        return Err(AssociationError::NoAssociation);
    }
    if fwd_score == rev_score {
        log::debug!("label alignment ties across orientations at score {top}; forward listed first");
    }
    let mut out = Vec::new();
    for (orientation, labels, best, score) in [
        (Orientation::Forward, &forward, &fwd_best, fwd_score),
        (Orientation::Reversed, &reversed, &rev_best, rev_score),
    ] {
        if score != top || out.len() >= MAX_ALIGNMENTS {
            continue;
        }
        let mut sets = Vec::new();
        let cap = MAX_ALIGNMENTS - out.len();
        enumerate(best, detected, labels, detected.len(), n, top, &mut Vec::new(), &mut sets, cap);
        if sets.len() >= cap {
            log::debug!("optimal alignments truncated at {MAX_ALIGNMENTS}");
        }
        for pairs in sets {
            let pairs = match orientation {
                Orientation::Forward => pairs,
                Orientation::Reversed => pairs.into_iter().map(|(d, k)| (d, n - 1 - k)).collect(),
            };
            out.push(Alignment {
                orientation,
                pairs,
                score: top,
            });
        }
    }
    Ok(out)
}
