//! `evaluate`: score a predicted span file against ground truth and write
//! the metrics report, matched span files, and per-sequence timelines.

use std::path::Path;

use signseg::metrics::{
    match_tolerance, matched_proportions, mf1b, mf1s, read_spans_file, render_timeline_svg,
    write_spans_file, MatchResult, MetricsReport, SegmentSpan, SpanRecord,
};
use signseg::train::FileConfig;
use signseg::Result;

use crate::corpus::{check_pred_ids, group_spans, spans_for};
use crate::runlog::RunLog;

fn starts(spans: &[SegmentSpan]) -> Vec<usize> {
    let mut s: Vec<usize> = spans.iter().map(|sp| sp.start).collect();
    s.sort_unstable();
    s
}

pub fn run(
    cfg: &FileConfig,
    pred: &Path,
    gt: &Path,
    out: &Path,
    log: &mut RunLog,
) -> Result<()> {
    let pred_records = read_spans_file(pred)?;
    log.input(pred)?;
    let gt_records = read_spans_file(gt)?;
    log.input(gt)?;

    let gt_groups = group_spans(&gt_records);
    let pred_groups = group_spans(&pred_records);
    check_pred_ids(&gt_groups, &pred_groups)?;

    let mut gt_bounds = Vec::with_capacity(gt_groups.len());
    let mut pred_bounds = Vec::with_capacity(gt_groups.len());
    let mut gt_spans_all = Vec::with_capacity(gt_groups.len());
    let mut pred_spans_all = Vec::with_capacity(gt_groups.len());
    let mut matches: Vec<MatchResult> = Vec::with_capacity(gt_groups.len());
    for (id, g) in &gt_groups {
        let p = spans_for(&pred_groups, id).to_vec();
        gt_bounds.push(starts(g));
        pred_bounds.push(starts(&p));
        matches.push(match_tolerance(g, &p, cfg.eval.tolerance_basis)?);
        gt_spans_all.push(g.clone());
        pred_spans_all.push(p);
    }

    let score_b = mf1b(&pred_bounds, &gt_bounds, &cfg.eval.boundary_thresholds, cfg.eval.averaging)?;
    let score_s = mf1s(&pred_spans_all, &gt_spans_all, &cfg.eval.iou_thresholds, cfg.eval.averaging)?;
    let prop = matched_proportions(&matches);

    let report = MetricsReport {
        sequences: gt_groups.len(),
        boundary_thresholds: cfg.eval.boundary_thresholds.clone(),
        iou_thresholds: cfg.eval.iou_thresholds.clone(),
        mf1b: score_b,
        mf1s: score_s,
        matched_segments: prop.matches,
        total_gt_segments: prop.total_gt,
        total_pred_segments: prop.total_pred,
        gt_matched: prop.gt,
        pred_matched: prop.pred,
        top1_by_k: Vec::new(),
    };
    let report_path = out.join("report.txt");
    std::fs::write(&report_path, report.to_text())?;
    log.output(&report_path)?;

    // Re-emit both files with the match flags this scoring decided on; the
    // recognition step keys off the flags in the ground-truth copy.
    let mut matched_gt = Vec::new();
    let mut matched_pred = Vec::new();
    for (((id, _), result), (g, p)) in gt_groups
        .iter()
        .zip(&matches)
        .zip(gt_spans_all.iter().zip(&pred_spans_all))
    {
        let mut g_hit = vec![false; g.len()];
        let mut p_hit = vec![false; p.len()];
        for &(gi, pi) in &result.pairs {
            g_hit[gi] = true;
            p_hit[pi] = true;
        }
        for (span, hit) in g.iter().zip(g_hit) {
            matched_gt.push(SpanRecord { seq: id.clone(), span: *span, matched: hit });
        }
        for (span, hit) in p.iter().zip(p_hit) {
            matched_pred.push(SpanRecord { seq: id.clone(), span: *span, matched: hit });
        }
    }
    let matched_pred_path = out.join("matched_pred.txt");
    write_spans_file(&matched_pred_path, &matched_pred)?;
    log.output(&matched_pred_path)?;
    let matched_gt_path = out.join("matched_gt.txt");
    write_spans_file(&matched_gt_path, &matched_gt)?;
    log.output(&matched_gt_path)?;

    let tl_dir = out.join("timelines");
    std::fs::create_dir_all(&tl_dir)?;
    for ((id, g), p) in gt_groups.iter().zip(&pred_spans_all) {
        let t = g
            .iter()
            .chain(p.iter())
            .map(|s| s.end + 1)
            .max()
            .expect("grouped sequences hold at least one span");
        let svg = render_timeline_svg(t, g, p)?;
        let path = tl_dir.join(format!("{}.svg", id));
        std::fs::write(&path, svg)?;
        log.output(&path)?;
    }

    println!(
        "evaluated {} sequences: mf1b {:.4}, mf1s {:.4}, {} of {} ground-truth segments matched",
        gt_groups.len(),
        score_b,
        score_s,
        prop.matches,
        prop.total_gt
    );
    Ok(())
}
