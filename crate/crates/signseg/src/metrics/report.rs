//! Evaluation outputs: the metrics report, per-sequence span files, and the
//! two-row timeline drawing.
//!
//! All serialization here is deterministic text with fixed key order and
//! fixed float precision, so repeated runs diff clean.

use std::fmt::Write as _;
use std::path::Path;

use super::decode::SegmentSpan;
use crate::error::{Error, Result};

/// Corpus evaluation summary. `to_text` emits keys in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub sequences: usize,
    pub boundary_thresholds: Vec<usize>,
    pub iou_thresholds: Vec<f64>,
    pub mf1b: f64,
    pub mf1s: f64,
    pub matched_segments: usize,
    pub total_gt_segments: usize,
    pub total_pred_segments: usize,
    /// Fractions in [0,1]; absent when the denominator was zero.
    pub gt_matched: Option<f64>,
    pub pred_matched: Option<f64>,
    /// (k, accuracy); accuracy absent when no segment qualified.
    pub top1_by_k: Vec<(usize, Option<f64>)>,
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sequences = {}", self.sequences);
        let caps: Vec<String> = self.boundary_thresholds.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "boundary_thresholds = {}", caps.join(","));
        let floors: Vec<String> = self.iou_thresholds.iter().map(|f| format!("{:.2}", f)).collect();
        let _ = writeln!(out, "iou_thresholds = {}", floors.join(","));
        let _ = writeln!(out, "mf1b = {:.6}", self.mf1b);
        let _ = writeln!(out, "mf1s = {:.6}", self.mf1s);
        let _ = writeln!(out, "matched_segments = {}", self.matched_segments);
        let _ = writeln!(out, "total_gt_segments = {}", self.total_gt_segments);
        let _ = writeln!(out, "total_pred_segments = {}", self.total_pred_segments);
        let pct = |v: &Option<f64>| match v {
            Some(f) => format!("{:.4}", 100.0 * f),
            None => "undefined".into(),
        };
        let _ = writeln!(out, "gt_matched_pct = {}", pct(&self.gt_matched));
        let _ = writeln!(out, "pred_matched_pct = {}", pct(&self.pred_matched));
        for (k, acc) in &self.top1_by_k {
            let shown = match acc {
                Some(a) => format!("{:.6}", a),
                None => "undefined".into(),
            };
            let _ = writeln!(out, "top1[k={}] = {}", k, shown);
        }
        out
    }
}

/// One segment of one sequence, as stored in a span file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanRecord {
    pub seq: String,
    pub span: SegmentSpan,
    pub matched: bool,
}

/// Span file layout: a `format: 1` header, then one line per segment with
/// sequence id, start, end, gloss (`-` when unknown), and match flag.
pub fn spans_to_text(records: &[SpanRecord]) -> Result<String> {
    let mut out = String::from("format: 1\n");
    for r in records {
        if r.seq.is_empty() || r.seq.chars().any(char::is_whitespace) {
            return Err(Error::data(format!("sequence id {:?} unusable in a span file", r.seq)));
        }
        r.span.validate()?;
        let gloss = match r.span.gloss {
            Some(g) => g.to_string(),
            None => "-".into(),
        };
        let flag = if r.matched { "matched" } else { "unmatched" };
        let _ = writeln!(out, "{} {} {} {} {}", r.seq, r.span.start, r.span.end, gloss, flag);
    }
    Ok(out)
}

pub fn parse_spans_text(text: &str, path: &Path) -> Result<Vec<SpanRecord>> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "format: 1")) => {}
        other => {
            return Err(err(
                1,
                format!("expected a 'format: 1' header, got {:?}", other.map(|(_, l)| l)),
            ))
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let n = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(n, format!("expected 5 fields, got {}", fields.len())));
        }
        let start: usize =
            fields[1].parse().map_err(|_| err(n, format!("bad start frame {:?}", fields[1])))?;
        let end: usize =
            fields[2].parse().map_err(|_| err(n, format!("bad end frame {:?}", fields[2])))?;
        if start > end {
            return Err(err(n, format!("segment starts at {} after its end {}", start, end)));
        }
        let gloss = match fields[3] {
            "-" => None,
            g => Some(g.parse().map_err(|_| err(n, format!("bad gloss {:?}", g)))?),
        };
        let matched = match fields[4] {
            "matched" => true,
            "unmatched" => false,
            other => return Err(err(n, format!("bad match flag {:?}", other))),
        };
        records.push(SpanRecord {
            seq: fields[0].to_string(),
            span: SegmentSpan { start, end, gloss },
            matched,
        });
    }
    Ok(records)
}

pub fn read_spans_file(path: &Path) -> Result<Vec<SpanRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    parse_spans_text(&text, path)
}

pub fn write_spans_file(path: &Path, records: &[SpanRecord]) -> Result<()> {
    std::fs::write(path, spans_to_text(records)?)?;
    Ok(())
}

const SVG_LEFT: f64 = 52.0;
const SVG_INNER: f64 = 720.0;
const SVG_ROW_H: f64 = 26.0;
const SVG_GAP: f64 = 12.0;
const SVG_PAD: f64 = 10.0;

/// Draw one sequence as two aligned rows, ground truth above prediction.
/// Filled bars are sign segments; the empty strip is background. Every
/// coordinate is emitted with two decimals so output is diff-stable.
pub fn render_timeline_svg(t: usize, gt: &[SegmentSpan], pred: &[SegmentSpan]) -> Result<String> {
    if t == 0 {
        return Err(Error::data("cannot draw a timeline for zero frames"));
    }
    for s in gt.iter().chain(pred.iter()) {
        s.validate()?;
        if s.end >= t {
            return Err(Error::data(format!(
                "segment {}..={} does not fit in {} frames",
                s.start, s.end, t
            )));
        }
    }
    let width = SVG_LEFT + SVG_INNER + SVG_PAD;
    let height = 2.0 * SVG_PAD + 2.0 * SVG_ROW_H + SVG_GAP;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.2}\" height=\"{:.2}\" \
         viewBox=\"0 0 {:.2} {:.2}\" font-family=\"sans-serif\" font-size=\"13\">",
        width, height, width, height
    );
    let rows: [(&str, &[SegmentSpan], &str); 2] =
        [("GT", gt, "#4878a8"), ("Pred", pred, "#c86048")];
    for (row, (name, spans, fill)) in rows.iter().enumerate() {
        let y = SVG_PAD + row as f64 * (SVG_ROW_H + SVG_GAP);
        let _ = writeln!(
            out,
            "  <text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            8.0,
            y + SVG_ROW_H - 8.0,
            name
        );
        let _ = writeln!(
            out,
            "  <rect class=\"row\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
             fill=\"none\" stroke=\"#999999\" stroke-width=\"1\"/>",
            SVG_LEFT, y, SVG_INNER, SVG_ROW_H
        );
        let scale = SVG_INNER / t as f64;
        for s in spans.iter() {
            let x = SVG_LEFT + s.start as f64 * scale;
            let w = s.duration() as f64 * scale;
            let _ = writeln!(
                out,
                "  <rect class=\"seg\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                 fill=\"{}\"/>",
                x, y, w, SVG_ROW_H, fill
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn sample_report() -> MetricsReport {
        MetricsReport {
            sequences: 50,
            boundary_thresholds: vec![1, 2, 3, 4],
            iou_thresholds: vec![0.40, 0.45, 0.50],
            mf1b: 0.8912345678,
            mf1s: 0.75,
            matched_segments: 3783,
            total_gt_segments: 6595,
            total_pred_segments: 6477,
            gt_matched: Some(3783.0 / 6595.0),
            pred_matched: Some(3783.0 / 6477.0),
            top1_by_k: vec![(6, Some(0.9130434)), (30, None)],
        }
    }

    #[test]
    fn report_text_is_stable_and_ordered() {
        let text = sample_report().to_text();
        let keys: Vec<&str> =
            text.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(
            keys,
            vec![
                "sequences",
                "boundary_thresholds",
                "iou_thresholds",
                "mf1b",
                "mf1s",
                "matched_segments",
                "total_gt_segments",
                "total_pred_segments",
                "gt_matched_pct",
                "pred_matched_pct",
                "top1[k=6]",
                "top1[k=30]",
            ]
        );
        assert!(text.contains("mf1b = 0.891235\n"));
        assert!(text.contains("gt_matched_pct = 57.3616\n"));
        assert!(text.contains("top1[k=30] = undefined\n"));
        assert_eq!(text, sample_report().to_text());
    }

    #[test]
    fn span_file_round_trip() {
        let records = vec![
            SpanRecord { seq: "seq003".into(), span: SegmentSpan::with_gloss(4, 12, 23), matched: true },
            SpanRecord { seq: "seq003".into(), span: SegmentSpan::new(15, 20), matched: false },
            SpanRecord { seq: "clip-b".into(), span: SegmentSpan::with_gloss(0, 0, 7), matched: true },
        ];
        let text = spans_to_text(&records).unwrap();
        let back = parse_spans_text(&text, &PathBuf::from("spans.txt")).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn span_file_rejects_malformed_lines() {
        let path = PathBuf::from("x");
        assert!(matches!(
            parse_spans_text("nope\n", &path),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_spans_text("format: 1\nseq 1 2 3\n", &path),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_spans_text("format: 1\nseq 9 2 - matched\n", &path),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_spans_text("format: 1\nseq 1 2 - maybe\n", &path),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad_id = vec![SpanRecord {
            seq: "two words".into(),
            span: SegmentSpan::new(0, 1),
            matched: false,
        }];
        assert!(spans_to_text(&bad_id).is_err());
    }

    #[test]
    fn svg_bar_count_matches_span_count() {
        let gt = vec![SegmentSpan::new(0, 9), SegmentSpan::new(20, 29), SegmentSpan::new(40, 49)];
        let pred = vec![SegmentSpan::new(1, 8)];
        let svg = render_timeline_svg(64, &gt, &pred).unwrap();
        assert_eq!(svg.matches("class=\"seg\"").count(), 4);
        assert_eq!(svg.matches("class=\"row\"").count(), 2);
        assert!(svg.contains(">GT</text>"));
        assert!(svg.contains(">Pred</text>"));
    }

    #[test]
    fn svg_coordinates_use_two_decimals() {
        let gt = vec![SegmentSpan::new(1, 2)];
        let svg = render_timeline_svg(3, &gt, &[]).unwrap();
        // 1/3 of 720 would print endless decimals without the fixed format
        assert!(svg.contains("x=\"292.00\""), "{}", svg);
        assert!(svg.contains("width=\"480.00\""));
        for token in svg.split('"').flat_map(str::split_whitespace) {
            if token.starts_with(|c: char| c.is_ascii_digit()) && token.contains('.') {
                let decimals = token.split('.').nth(1).unwrap();
                assert_eq!(decimals.len(), 2, "coordinate {:?}", token);
            }
        }
    }

    #[test]
    fn svg_rejects_out_of_range_input() {
        assert!(render_timeline_svg(0, &[], &[]).is_err());
        assert!(render_timeline_svg(10, &[SegmentSpan::new(5, 10)], &[]).is_err());
    }

    #[test]
    fn span_files_hit_disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spans.txt");
        let records = vec![SpanRecord {
            seq: "s1".into(),
            span: SegmentSpan::with_gloss(3, 9, 4),
            matched: true,
        }];
        write_spans_file(&path, &records).unwrap();
        assert_eq!(read_spans_file(&path).unwrap(), records);
    }
}
