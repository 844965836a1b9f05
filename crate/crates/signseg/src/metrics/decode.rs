//! Conversion between frame label streams and segment span lists.
//!
//! A segment is a boundary frame plus the maximal interior run right after
//! it. A fresh boundary always opens a new segment, so back-to-back signs
//! with no transition frames between them stay two segments.

use crate::data::Label;
use crate::error::{Error, Result};

/// One sign occupying frames `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentSpan {
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub gloss: Option<usize>,
}

impl SegmentSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        SegmentSpan { start, end, gloss: None }
    }

    pub fn with_gloss(start: usize, end: usize, gloss: usize) -> Self {
        SegmentSpan { start, end, gloss: Some(gloss) }
    }

    pub fn duration(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.start > self.end {
            return Err(Error::data(format!(
                "segment starts at {} after its end {}",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

/// Lenient decode output. `orphan_runs` counts interior runs that had no
/// boundary frame in front of them and were promoted to segments anyway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub spans: Vec<SegmentSpan>,
    pub orphan_runs: usize,
}

/// Decode a label stream into segments, tolerating orphan interior runs.
/// Padding ends a segment the same way a transition frame does.
pub fn decode_bio(labels: &[Label]) -> Decoded {
    let mut spans = Vec::new();
    let mut orphan_runs = 0usize;
    let mut open: Option<usize> = None;
    for (t, &label) in labels.iter().enumerate() {
        match label {
            Label::Boundary => {
                if let Some(start) = open {
                    spans.push(SegmentSpan::new(start, t - 1));
                }
                open = Some(t);
            }
            Label::Interior => {
                if open.is_none() {
                    orphan_runs += 1;
                    open = Some(t);
                }
            }
            Label::Transition | Label::Padding => {
                if let Some(start) = open.take() {
                    spans.push(SegmentSpan::new(start, t - 1));
                }
            }
        }
    }
    if let Some(start) = open {
        spans.push(SegmentSpan::new(start, labels.len() - 1));
    }
    Decoded { spans, orphan_runs }
}

/// Decode, rejecting label streams where an interior run lacks a boundary.
pub fn decode_bio_strict(labels: &[Label]) -> Result<Vec<SegmentSpan>> {
    let decoded = decode_bio(labels);
    if decoded.orphan_runs > 0 {
        return Err(Error::data(format!(
            "{} interior runs start without a boundary frame",
            decoded.orphan_runs
        )));
    }
    Ok(decoded.spans)
}

/// Inverse of [`decode_bio`]: boundary at each span start, interior after,
/// transition elsewhere. Spans must be sorted and non-overlapping.
pub fn encode_bio(spans: &[SegmentSpan], t: usize) -> Result<Vec<Label>> {
    let mut labels = vec![Label::Transition; t];
    let mut prev_end: Option<usize> = None;
    for span in spans {
        span.validate()?;
        if span.end >= t {
            return Err(Error::data(format!(
                "segment {}..={} does not fit in {} frames",
                span.start, span.end, t
            )));
        }
        if let Some(pe) = prev_end {
            if span.start <= pe {
                return Err(Error::data(format!(
                    "segment starting at {} overlaps or precedes one ending at {}",
                    span.start, pe
                )));
            }
        }
        labels[span.start] = Label::Boundary;
        for frame in labels.iter_mut().take(span.end + 1).skip(span.start + 1) {
            *frame = Label::Interior;
        }
        prev_end = Some(span.end);
    }
    Ok(labels)
}

/// Positions of boundary-labeled frames.
pub fn boundary_frames(labels: &[Label]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == Label::Boundary)
        .map(|(t, _)| t)
        .collect()
}
