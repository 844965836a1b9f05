//! Shared file plumbing: pose directories, span grouping, and id checks.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use signseg::data::PoseSequence;
use signseg::metrics::{SegmentSpan, SpanRecord};
use signseg::posefile::read_pose_file;
use signseg::{Error, Result};

/// Load every `*.txt` pose file in `dir`, sorted by file name. The id of a
/// sequence is its file stem.
pub fn load_pose_dir(dir: &Path) -> Result<Vec<(String, PoseSequence)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::data(format!("no pose files in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|path| {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::data(format!("unusable file name {}", path.display())))?
                .to_string();
            Ok((id, read_pose_file(&path)?))
        })
        .collect()
}

/// Group span records by sequence id, preserving first-appearance order.
pub fn group_spans(records: &[SpanRecord]) -> Vec<(String, Vec<SegmentSpan>)> {
    let mut groups: Vec<(String, Vec<SegmentSpan>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|(id, _)| *id == r.seq) {
            Some((_, spans)) => spans.push(r.span),
            None => groups.push((r.seq.clone(), vec![r.span])),
        }
    }
    groups
}

/// Predicted spans may only name sequences the ground truth knows. The
/// reverse is fine: a sequence with no predicted segments writes no lines.
pub fn check_pred_ids(
    gt: &[(String, Vec<SegmentSpan>)],
    pred: &[(String, Vec<SegmentSpan>)],
) -> Result<()> {
    let known: BTreeSet<&str> = gt.iter().map(|(id, _)| id.as_str()).collect();
    let unknown: Vec<&str> = pred
        .iter()
        .map(|(id, _)| id.as_str())
        .filter(|id| !known.contains(id))
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::data(format!(
            "predicted spans name sequences absent from the ground truth: {}",
            unknown.join(", ")
        )))
    }
}

/// Spans of `id` in `groups`, or an empty slice when the sequence wrote none.
pub fn spans_for<'a>(groups: &'a [(String, Vec<SegmentSpan>)], id: &str) -> &'a [SegmentSpan] {
    groups
        .iter()
        .find(|(gid, _)| gid == id)
        .map(|(_, spans)| spans.as_slice())
        .unwrap_or(&[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use signseg::metrics::SegmentSpan;

    fn rec(seq: &str, start: usize, end: usize) -> SpanRecord {
        SpanRecord { seq: seq.into(), span: SegmentSpan::new(start, end), matched: false }
    }

    #[test]
    fn grouping_preserves_order() {
        let records = vec![rec("b", 0, 2), rec("a", 3, 4), rec("b", 5, 6)];
        let groups = group_spans(&records);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].0, "b");
        assert_eq!(groups[0].1.len(), 2);
        assert_eq!(groups[1].0, "a");
        assert_eq!(spans_for(&groups, "a").len(), 1);
        assert!(spans_for(&groups, "missing").is_empty());
    }

    #[test]
    fn unknown_pred_ids_are_listed() {
        let gt = vec![("a".to_string(), vec![SegmentSpan::new(0, 1)])];
        let pred = vec![
            ("a".to_string(), vec![SegmentSpan::new(0, 1)]),
            ("ghost".to_string(), vec![SegmentSpan::new(2, 3)]),
        ];
        let err = check_pred_ids(&gt, &pred).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{}", err);
        assert!(check_pred_ids(&gt, &gt).is_ok());
    }

    #[test]
    fn pose_dir_requires_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_pose_dir(dir.path()).is_err());
    }
}
