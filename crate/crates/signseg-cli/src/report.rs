//! `report`: redraw timelines and tally two span files without rescoring
//! anything. Match flags are taken as recorded.

use std::fmt::Write as _;
use std::path::Path;

use signseg::metrics::{read_spans_file, render_timeline_svg, SpanRecord};
use signseg::Result;

use crate::corpus::{group_spans, spans_for};
use crate::runlog::RunLog;

fn tally(out: &mut String, side: &str, records: &[SpanRecord]) {
    let groups = group_spans(records);
    let matched = records.iter().filter(|r| r.matched).count();
    let _ = writeln!(out, "{}_sequences = {}", side, groups.len());
    let _ = writeln!(out, "{}_segments = {}", side, records.len());
    let _ = writeln!(out, "{}_matched = {}", side, matched);
}

pub fn run(pred: &Path, gt: &Path, out: &Path, log: &mut RunLog) -> Result<()> {
    let pred_records = read_spans_file(pred)?;
    log.input(pred)?;
    let gt_records = read_spans_file(gt)?;
    log.input(gt)?;

    let mut summary = String::from("format: 1\n");
    tally(&mut summary, "gt", &gt_records);
    tally(&mut summary, "pred", &pred_records);
    let summary_path = out.join("summary.txt");
    std::fs::write(&summary_path, &summary)?;
    log.output(&summary_path)?;

    let gt_groups = group_spans(&gt_records);
    let pred_groups = group_spans(&pred_records);
    let mut ids: Vec<&str> = gt_groups.iter().map(|(id, _)| id.as_str()).collect();
    for (id, _) in &pred_groups {
        if !ids.contains(&id.as_str()) {
            ids.push(id);
        }
    }

    let tl_dir = out.join("timelines");
    std::fs::create_dir_all(&tl_dir)?;
    for id in ids {
        let g = spans_for(&gt_groups, id);
        let p = spans_for(&pred_groups, id);
        let t = g
            .iter()
            .chain(p.iter())
            .map(|s| s.end + 1)
            .max()
            .expect("every listed id has at least one span");
        let svg = render_timeline_svg(t, g, p)?;
        let path = tl_dir.join(format!("{}.svg", id));
        std::fs::write(&path, svg)?;
        log.output(&path)?;
    }

    println!(
        "summarized {} ground-truth and {} predicted segments, timelines in {}",
        gt_records.len(),
        pred_records.len(),
        tl_dir.display()
    );
    Ok(())
}
