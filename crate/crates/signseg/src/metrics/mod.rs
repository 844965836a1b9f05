//! Segment decoding and evaluation scores.
//!
//! A predicted label stream turns into segments through the BIO decoder;
//! segments and boundaries are then scored three ways: boundary F1 averaged
//! over frame-distance thresholds, segment F1 averaged over IoU thresholds,
//! and a duration-adaptive tolerance match that feeds both the matched-sign
//! proportions and the downstream recognition accuracy. All matchers find a
//! true maximum one-to-one matching, so scores never depend on input order.

mod decode;
mod matching;
mod report;
mod scores;

pub use decode::{
    boundary_frames, decode_bio, decode_bio_strict, encode_bio, Decoded, SegmentSpan,
};
pub use matching::{
    match_tolerance, max_bipartite_matching, span_iou, tolerance_for_duration, MatchResult,
    ToleranceBasis,
};
pub use report::{
    parse_spans_text, read_spans_file, render_timeline_svg, spans_to_text, write_spans_file,
    MetricsReport, SpanRecord,
};
pub use scores::{
    boundary_f1, matched_proportions, mf1b, mf1s, segment_f1, top1_accuracy, Averaging,
    MatchedPair, Proportions, DEFAULT_BOUNDARY_THRESHOLDS, DEFAULT_IOU_THRESHOLDS,
};
