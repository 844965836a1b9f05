//! One-to-one matchers used by every score.
//!
//! All matching goes through a single exact maximum-cardinality bipartite
//! matcher (augmenting paths), so scores are order-independent and the
//! brute-force comparisons in the tests hold with equality, not just
//! approximately.

use super::decode::SegmentSpan;
use crate::error::{Error, Result};

/// Maximum one-to-one matching between `n_left` and `n_right` nodes under
/// an admissibility predicate. Returns, per left node, the matched right
/// node. Deterministic: nodes are tried in index order.
pub fn max_bipartite_matching(
    n_left: usize,
    n_right: usize,
    admissible: impl Fn(usize, usize) -> bool,
) -> Vec<Option<usize>> {
    let adj: Vec<Vec<usize>> = (0..n_left)
        .map(|l| (0..n_right).filter(|&r| admissible(l, r)).collect())
        .collect();
    let mut match_left: Vec<Option<usize>> = vec![None; n_left];
    let mut match_right: Vec<Option<usize>> = vec![None; n_right];
    for l in 0..n_left {
        let mut seen = vec![false; n_right];
        augment(l, &adj, &mut seen, &mut match_left, &mut match_right);
    }
    match_left
}

fn augment(
    l: usize,
    adj: &[Vec<usize>],
    seen: &mut [bool],
    match_left: &mut [Option<usize>],
    match_right: &mut [Option<usize>],
) -> bool {
    for &r in &adj[l] {
        if seen[r] {
            continue;
        }
        seen[r] = true;
        let free = match match_right[r] {
            None => true,
            Some(owner) => augment(owner, adj, seen, match_left, match_right),
        };
        if free {
            match_right[r] = Some(l);
            match_left[l] = Some(r);
            return true;
        }
    }
    false
}

/// Boundary tolerance for a sign of duration `d` frames: short signs get a
/// tight window, long signs a wider one.
pub fn tolerance_for_duration(d: usize) -> Result<usize> {
    match d {
        0 => Err(Error::data("zero-duration sign has no boundary tolerance")),
        1..=5 => Ok(2),
        6..=10 => Ok(3),
        11..=23 => Ok(4),
        _ => Ok(5),
    }
}

/// Intersection over union of two inclusive frame spans.
pub fn span_iou(a: &SegmentSpan, b: &SegmentSpan) -> f64 {
    let lo = a.start.max(b.start);
    let hi = a.end.min(b.end);
    let inter = if lo <= hi { hi - lo + 1 } else { 0 };
    let union = a.duration() + b.duration() - inter;
    inter as f64 / union as f64
}

/// Which side's duration sets the tolerance window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToleranceBasis {
    GroundTruth,
    Prediction,
}

/// One-to-one matching outcome over one sequence's segments. Indices refer
/// to the input span lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// (gt index, pred index), ascending in gt index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

impl MatchResult {
    pub fn num_gt(&self) -> usize {
        self.pairs.len() + self.unmatched_gt.len()
    }

    pub fn num_pred(&self) -> usize {
        self.pairs.len() + self.unmatched_pred.len()
    }
}

/// Match predicted segments to ground truth: a pair is admissible when both
/// the start and the end offsets fit inside the tolerance derived from the
/// basis span's duration. Returns a maximum matching.
pub fn match_tolerance(
    gt: &[SegmentSpan],
    pred: &[SegmentSpan],
    basis: ToleranceBasis,
) -> Result<MatchResult> {
    for s in gt.iter().chain(pred.iter()) {
        s.validate()?;
    }
    let tol_of = |span: &SegmentSpan| tolerance_for_duration(span.duration());
    let gt_tol: Vec<usize> = gt.iter().map(tol_of).collect::<Result<_>>()?;
    let pred_tol: Vec<usize> = pred.iter().map(tol_of).collect::<Result<_>>()?;
    let admissible = |g: usize, p: usize| {
        let tol = match basis {
            ToleranceBasis::GroundTruth => gt_tol[g],
            ToleranceBasis::Prediction => pred_tol[p],
        };
        gt[g].start.abs_diff(pred[p].start) <= tol && gt[g].end.abs_diff(pred[p].end) <= tol
    };
    let assignment = max_bipartite_matching(gt.len(), pred.len(), admissible);
    let mut pairs = Vec::new();
    let mut unmatched_gt = Vec::new();
    let mut matched_pred = vec![false; pred.len()];
    for (g, m) in assignment.iter().enumerate() {
        match m {
            Some(p) => {
                pairs.push((g, *p));
                matched_pred[*p] = true;
            }
            None => unmatched_gt.push(g),
        }
    }
    let unmatched_pred = (0..pred.len()).filter(|&p| !matched_pred[p]).collect();
    Ok(MatchResult { pairs, unmatched_gt, unmatched_pred })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive maximum matching by trying, for every left node, each
    /// admissible free right node or leaving it unmatched.
    fn brute_force_max(n_left: usize, n_right: usize, adm: &dyn Fn(usize, usize) -> bool) -> usize {
        fn go(l: usize, n_left: usize, n_right: usize, used: &mut [bool], adm: &dyn Fn(usize, usize) -> bool) -> usize {
            if l == n_left {
                return 0;
            }
            let mut best = go(l + 1, n_left, n_right, used, adm);
            for r in 0..n_right {
                if !used[r] && adm(l, r) {
                    used[r] = true;
                    best = best.max(1 + go(l + 1, n_left, n_right, used, adm));
                    used[r] = false;
                }
            }
            best
        }
        go(0, n_left, n_right, &mut vec![false; n_right], adm)
    }

    #[test]
    fn matcher_handles_the_classic_exchange_case() {
        // left 0 admits right {0,1}, left 1 admits only {0}: a greedy pass
        // that gives right 0 to left 0 must reroute to match both
        let adm = |l: usize, r: usize| matches!((l, r), (0, 0) | (0, 1) | (1, 0));
        let m = max_bipartite_matching(2, 2, adm);
        assert_eq!(m, vec![Some(1), Some(0)]);
    }

    #[test]
    fn empty_sides_match_nothing() {
        assert!(max_bipartite_matching(0, 5, |_, _| true).is_empty());
        assert_eq!(max_bipartite_matching(3, 0, |_, _| true), vec![None; 3]);
    }

    #[test]
    fn tolerance_table_exact_values() {
        for (d, want) in [(1, 2), (5, 2), (6, 3), (10, 3), (11, 4), (23, 4), (24, 5), (400, 5)] {
            assert_eq!(tolerance_for_duration(d).unwrap(), want, "duration {}", d);
        }
        assert!(tolerance_for_duration(0).is_err());
    }

    #[test]
    fn tolerance_is_non_decreasing() {
        let mut prev = 0;
        for d in 1..=200 {
            let tol = tolerance_for_duration(d).unwrap();
            assert!(tol >= prev, "tolerance dropped at duration {}", d);
            prev = tol;
        }
    }

    #[test]
    fn iou_direct_counts() {
        let a = SegmentSpan::new(0, 9);
        let b = SegmentSpan::new(5, 14);
        assert_eq!(span_iou(&a, &b), 5.0 / 15.0);
        assert_eq!(span_iou(&a, &a), 1.0);
        assert_eq!(span_iou(&a, &SegmentSpan::new(20, 25)), 0.0);
        // symmetry
        assert_eq!(span_iou(&a, &b), span_iou(&b, &a));
    }

    #[test]
    fn tolerance_match_examples() {
        // duration 5 sign: both offsets exactly at the +-2 window edge
        let gt = [SegmentSpan::new(10, 14)];
        let hit = [SegmentSpan::new(12, 16)];
        let m = match_tolerance(&gt, &hit, ToleranceBasis::GroundTruth).unwrap();
        assert_eq!(m.pairs, vec![(0, 0)]);
        // start off by 3: outside
        let miss = [SegmentSpan::new(13, 16)];
        let m = match_tolerance(&gt, &miss, ToleranceBasis::GroundTruth).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_gt, vec![0]);
        assert_eq!(m.unmatched_pred, vec![0]);
    }

    #[test]
    fn one_pred_admissible_to_two_gt_matches_once() {
        let gt = [SegmentSpan::new(10, 14), SegmentSpan::new(11, 15)];
        let pred = [SegmentSpan::new(10, 14)];
        let m = match_tolerance(&gt, &pred, ToleranceBasis::GroundTruth).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.unmatched_gt.len(), 1);
        assert!(m.unmatched_pred.is_empty());
    }

    #[test]
    fn basis_selects_whose_duration_sets_the_window() {
        // gt is short (tol 2), pred is long (tol 4); offsets of 4 pass only
        // when the prediction's duration drives the tolerance
        let gt = [SegmentSpan::new(20, 24)];
        let pred = [SegmentSpan::new(16, 28)];
        let strict = match_tolerance(&gt, &pred, ToleranceBasis::GroundTruth).unwrap();
        assert!(strict.pairs.is_empty());
        let loose = match_tolerance(&gt, &pred, ToleranceBasis::Prediction).unwrap();
        assert_eq!(loose.pairs, vec![(0, 0)]);
    }

    #[test]
    fn match_result_counts_add_up() {
        let gt = [SegmentSpan::new(0, 4), SegmentSpan::new(10, 14), SegmentSpan::new(30, 40)];
        let pred = [SegmentSpan::new(1, 5), SegmentSpan::new(29, 41)];
        let m = match_tolerance(&gt, &pred, ToleranceBasis::GroundTruth).unwrap();
        assert_eq!(m.num_gt(), 3);
        assert_eq!(m.num_pred(), 2);
        assert_eq!(m.pairs.len(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(600))]

        /// The augmenting-path matcher finds the same cardinality as
        /// exhaustive search on small random bipartite graphs.
        #[test]
        fn cardinality_equals_brute_force(
            n_left in 0usize..=7,
            n_right in 0usize..=7,
            bits in prop::collection::vec(any::<bool>(), 49),
        ) {
            let adm = |l: usize, r: usize| bits[l * 7 + r];
            let m = max_bipartite_matching(n_left, n_right, adm);
            let card = m.iter().filter(|x| x.is_some()).count();
            prop_assert_eq!(card, brute_force_max(n_left, n_right, &adm));
            // one-to-one: no right node claimed twice
            let mut rights: Vec<usize> = m.iter().flatten().copied().collect();
            rights.sort_unstable();
            rights.dedup();
            prop_assert_eq!(rights.len(), card);
        }

        /// Random span matchings stay one-to-one and respect admissibility.
        #[test]
        fn tolerance_match_is_sound(
            raw_gt in prop::collection::vec((0usize..60, 1usize..26), 0..8),
            raw_pred in prop::collection::vec((0usize..60, 1usize..26), 0..8),
        ) {
            let build = |raw: &[(usize, usize)]| {
                let mut cursor = 0usize;
                let mut out = Vec::new();
                for &(gap, dur) in raw {
                    let start = cursor + gap;
                    out.push(SegmentSpan::new(start, start + dur - 1));
                    cursor = start + dur + 1;
                }
                out
            };
            let gt = build(&raw_gt);
            let pred = build(&raw_pred);
            let m = match_tolerance(&gt, &pred, ToleranceBasis::GroundTruth).unwrap();
            prop_assert_eq!(m.num_gt(), gt.len());
            prop_assert_eq!(m.num_pred(), pred.len());
            for &(g, p) in &m.pairs {
                let tol = tolerance_for_duration(gt[g].duration()).unwrap();
                prop_assert!(gt[g].start.abs_diff(pred[p].start) <= tol);
                prop_assert!(gt[g].end.abs_diff(pred[p].end) <= tol);
            }
        }
    }
}
