//! Corpus-level scores: boundary F1, segment F1, matched-sign proportions,
//! and recognition accuracy over matched segments.

use std::collections::BTreeMap;

use super::decode::SegmentSpan;
use super::matching::{max_bipartite_matching, span_iou, MatchResult};
use crate::error::{Error, Result};

/// Frame-distance caps for boundary F1. A boundary pair matches when its
/// distance is strictly below the cap.
pub const DEFAULT_BOUNDARY_THRESHOLDS: [usize; 4] = [1, 2, 3, 4];

/// IoU floors for segment F1. A span pair matches when its IoU strictly
/// exceeds the floor.
pub const DEFAULT_IOU_THRESHOLDS: [f64; 8] = [0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75];

/// How corpus scores aggregate: mean of per-sequence scores, or one score
/// from corpus-wide match counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    PerSequence,
    Micro,
}

fn f1_from_counts(matches: usize, n_pred: usize, n_gt: usize) -> f64 {
    if n_pred + n_gt == 0 {
        // nothing to find and nothing claimed
        return 1.0;
    }
    2.0 * matches as f64 / (n_pred + n_gt) as f64
}

fn boundary_match_count(pred: &[usize], gt: &[usize], cap: usize) -> usize {
    let m = max_bipartite_matching(pred.len(), gt.len(), |p, g| pred[p].abs_diff(gt[g]) < cap);
    m.iter().filter(|x| x.is_some()).count()
}

fn iou_match_count(pred: &[SegmentSpan], gt: &[SegmentSpan], floor: f64) -> usize {
    let m = max_bipartite_matching(pred.len(), gt.len(), |p, g| span_iou(&pred[p], &gt[g]) > floor);
    m.iter().filter(|x| x.is_some()).count()
}

/// Boundary F1 for one sequence, averaged over distance caps.
pub fn boundary_f1(pred: &[usize], gt: &[usize], thresholds: &[usize]) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(Error::config("boundary F1 wants at least one distance threshold"));
    }
    let sum: f64 = thresholds
        .iter()
        .map(|&cap| f1_from_counts(boundary_match_count(pred, gt, cap), pred.len(), gt.len()))
        .sum();
    Ok(sum / thresholds.len() as f64)
}

/// Segment F1 for one sequence, averaged over IoU floors.
pub fn segment_f1(pred: &[SegmentSpan], gt: &[SegmentSpan], thresholds: &[f64]) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(Error::config("segment F1 wants at least one IoU threshold"));
    }
    for s in pred.iter().chain(gt.iter()) {
        s.validate()?;
    }
    let sum: f64 = thresholds
        .iter()
        .map(|&floor| f1_from_counts(iou_match_count(pred, gt, floor), pred.len(), gt.len()))
        .sum();
    Ok(sum / thresholds.len() as f64)
}

/// Mean boundary F1 over a corpus. `pred[i]` and `gt[i]` hold sequence i's
/// boundary frame positions.
pub fn mf1b(
    pred: &[Vec<usize>],
    gt: &[Vec<usize>],
    thresholds: &[usize],
    averaging: Averaging,
) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::data(format!(
            "{} predicted sequences against {} ground-truth sequences",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::data("boundary F1 over an empty corpus"));
    }
    if thresholds.is_empty() {
        return Err(Error::config("boundary F1 wants at least one distance threshold"));
    }
    match averaging {
        Averaging::PerSequence => {
            let sum: f64 = pred
                .iter()
                .zip(gt)
                .map(|(p, g)| boundary_f1(p, g, thresholds))
                .sum::<Result<f64>>()?;
            Ok(sum / pred.len() as f64)
        }
        Averaging::Micro => {
            let mut acc = 0.0;
            for &cap in thresholds {
                let mut matches = 0;
                let mut n_pred = 0;
                let mut n_gt = 0;
                for (p, g) in pred.iter().zip(gt) {
                    matches += boundary_match_count(p, g, cap);
                    n_pred += p.len();
                    n_gt += g.len();
                }
                acc += f1_from_counts(matches, n_pred, n_gt);
            }
            Ok(acc / thresholds.len() as f64)
        }
    }
}

/// Mean segment F1 over a corpus.
pub fn mf1s(
    pred: &[Vec<SegmentSpan>],
    gt: &[Vec<SegmentSpan>],
    thresholds: &[f64],
    averaging: Averaging,
) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::data(format!(
            "{} predicted sequences against {} ground-truth sequences",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::data("segment F1 over an empty corpus"));
    }
    if thresholds.is_empty() {
        return Err(Error::config("segment F1 wants at least one IoU threshold"));
    }
    match averaging {
        Averaging::PerSequence => {
            let sum: f64 = pred
                .iter()
                .zip(gt)
                .map(|(p, g)| segment_f1(p, g, thresholds))
                .sum::<Result<f64>>()?;
            Ok(sum / pred.len() as f64)
        }
        Averaging::Micro => {
            for seq in pred.iter().chain(gt.iter()) {
                for s in seq {
                    s.validate()?;
                }
            }
            let mut acc = 0.0;
            for &floor in thresholds {
                let mut matches = 0;
                let mut n_pred = 0;
                let mut n_gt = 0;
                for (p, g) in pred.iter().zip(gt) {
                    matches += iou_match_count(p, g, floor);
                    n_pred += p.len();
                    n_gt += g.len();
                }
                acc += f1_from_counts(matches, n_pred, n_gt);
            }
            Ok(acc / thresholds.len() as f64)
        }
    }
}

/// Corpus-level matched-sign proportions. Both ratios share one numerator:
/// the total number of matched pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proportions {
    pub matches: usize,
    pub total_gt: usize,
    pub total_pred: usize,
    /// matches / total_gt, absent when there are no ground-truth signs.
    pub gt: Option<f64>,
    /// matches / total_pred, absent when there are no predicted signs.
    pub pred: Option<f64>,
}

pub fn matched_proportions(results: &[MatchResult]) -> Proportions {
    let matches: usize = results.iter().map(|r| r.pairs.len()).sum();
    let total_gt: usize = results.iter().map(|r| r.num_gt()).sum();
    let total_pred: usize = results.iter().map(|r| r.num_pred()).sum();
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Proportions {
        matches,
        total_gt,
        total_pred,
        gt: ratio(matches, total_gt),
        pred: ratio(matches, total_pred),
    }
}

/// A ground-truth sign paired with the predicted segment that matched it.
/// The ground-truth side carries the gloss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchedPair {
    pub gt: SegmentSpan,
    pub pred: SegmentSpan,
}

/// Top-1 recognition accuracy over matched pairs whose gloss has at least
/// `k` training samples. `None` when no pair qualifies.
pub fn top1_accuracy(
    pairs: &[MatchedPair],
    mut classify_top1: impl FnMut(&SegmentSpan) -> usize,
    train_counts: &BTreeMap<usize, usize>,
    k: usize,
) -> Result<Option<f64>> {
    let mut qualifying = 0usize;
    let mut hits = 0usize;
    for pair in pairs {
        let gloss = pair
            .gt
            .gloss
            .ok_or_else(|| Error::data("matched pair carries no ground-truth gloss"))?;
        if train_counts.get(&gloss).copied().unwrap_or(0) < k {
            continue;
        }
        qualifying += 1;
        if classify_top1(&pair.pred) == gloss {
            hits += 1;
        }
    }
    if qualifying == 0 {
        return Ok(None);
    }
    Ok(Some(hits as f64 / qualifying as f64))
}
