//! Plain-text pose and handshape files.
//!
//! Pose files carry one clip each:
//!
//! ```text
//! format: 1
//! fps: 25
//! joints: 27
//! labels: OBIIO
//! <frame: 2*joints floats, whitespace separated>
//! ...
//! ```
//!
//! The `labels:` line is optional. Frame lines with `3*joints` values are
//! accepted too; the third value per joint (a detector confidence) is
//! dropped. Handshape datasets hold one labeled 21-point hand per line:
//!
//! ```text
//! format: 1
//! classes: 87
//! <class> <42 floats>
//! ...
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write-read cycle reproduces every bit.
//!
//! A corpus manifest names every sequence and its signs in order:
//!
//! ```text
//! format: 1
//! classes: 87
//! seq train_000 12 5 33
//! ...
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{labels_from_string, labels_to_string, PoseSequence};
use crate::error::{Error, Result};
use crate::graphs::hand;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        msg: msg.into(),
    }
}

/// Parse pose-file text. `path` is only used in error messages.
pub fn parse_pose_text(text: &str, path: &Path) -> Result<PoseSequence> {
    let mut fps: Option<f64> = None;
    let mut joints: Option<usize> = None;
    let mut labels_line: Option<String> = None;
    let mut frames: Vec<Vec<f64>> = Vec::new();
    let mut saw_format = false;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !saw_format {
            match line.strip_prefix("format:") {
                Some(v) if v.trim() == "1" => {
                    saw_format = true;
                    continue;
                }
                Some(v) => {
                    return Err(Error::Schema(format!(
                        "{}: unsupported pose format {:?}",
                        path.display(),
                        v.trim()
                    )))
                }
                None => return Err(parse_err(path, lineno, "first line must be 'format: 1'")),
            }
        }
        if let Some(v) = line.strip_prefix("fps:") {
            fps = Some(
                v.trim()
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad fps {:?}", v.trim())))?,
            );
        } else if let Some(v) = line.strip_prefix("joints:") {
            joints = Some(
                v.trim()
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad joint count {:?}", v.trim())))?,
            );
        } else if let Some(v) = line.strip_prefix("labels:") {
            labels_line = Some(v.trim().to_string());
        } else {
            let j = joints
                .ok_or_else(|| parse_err(path, lineno, "frame data before 'joints:' header"))?;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| parse_err(path, lineno, format!("bad number {:?}", t)))
                })
                .collect::<Result<_>>()?;
            let coords = if values.len() == 2 * j {
                values
            } else if values.len() == 3 * j {
                values
                    .chunks_exact(3)
                    .flat_map(|c| [c[0], c[1]])
                    .collect()
            } else {
                return Err(parse_err(
                    path,
                    lineno,
                    format!(
                        "frame has {} values, want {} or {} for {} joints",
                        values.len(),
                        2 * j,
                        3 * j,
                        j
                    ),
                ));
            };
            frames.push(coords);
        }
    }

    if !saw_format {
        return Err(Error::Schema(format!("{}: empty pose file", path.display())));
    }
    let fps = fps.ok_or_else(|| Error::Schema(format!("{}: missing fps", path.display())))?;
    let joints =
        joints.ok_or_else(|| Error::Schema(format!("{}: missing joints", path.display())))?;
    let labels = match labels_line {
        Some(s) => {
            let ls = labels_from_string(&s)?;
            if ls.len() != frames.len() {
                return Err(Error::Schema(format!(
                    "{}: {} labels for {} frames",
                    path.display(),
                    ls.len(),
                    frames.len()
                )));
            }
            Some(ls)
        }
        None => None,
    };
    let coords: Vec<f64> = frames.into_iter().flatten().collect();
    PoseSequence::new(joints, coords, fps, labels)
}

pub fn read_pose_file(path: &Path) -> Result<PoseSequence> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    parse_pose_text(&text, path)
}

/// Render a sequence in canonical pose-file form.
pub fn pose_to_text(seq: &PoseSequence) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format: 1");
    let _ = writeln!(out, "fps: {}", seq.fps);
    let _ = writeln!(out, "joints: {}", seq.joints());
    if let Some(labels) = &seq.labels {
        let _ = writeln!(out, "labels: {}", labels_to_string(labels));
    }
    let width = seq.joints() * 2;
    for f in 0..seq.frames() {
        let row = &seq.coords()[f * width..(f + 1) * width];
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", v);
        }
        out.push('\n');
    }
    out
}

pub fn write_pose_file(path: &Path, seq: &PoseSequence) -> Result<()> {
    std::fs::write(path, pose_to_text(seq))?;
    Ok(())
}

/// One labeled hand pose: 21 normalized points.
#[derive(Debug, Clone, PartialEq)]
pub struct HandshapeSample {
    pub class: usize,
    pub points: Vec<f64>,
}

/// A labeled handshape collection with a fixed class inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct HandshapeDataset {
    pub classes: usize,
    pub samples: Vec<HandshapeSample>,
}

impl HandshapeDataset {
    /// Samples per class, indexed by class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes];
        for s in &self.samples {
            counts[s.class] += 1;
        }
        counts
    }
}

pub fn parse_handshape_text(text: &str, path: &Path) -> Result<HandshapeDataset> {
    let mut classes: Option<usize> = None;
    let mut samples = Vec::new();
    let mut saw_format = false;
    let want = hand::JOINTS * 2;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !saw_format {
            match line.strip_prefix("format:") {
                Some(v) if v.trim() == "1" => {
                    saw_format = true;
                    continue;
                }
                _ => return Err(parse_err(path, lineno, "first line must be 'format: 1'")),
            }
        }
        if let Some(v) = line.strip_prefix("classes:") {
            classes = Some(
                v.trim()
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad class count {:?}", v.trim())))?,
            );
            continue;
        }
        let mut toks = line.split_whitespace();
        let class: usize = toks
            .next()
            .unwrap()
            .parse()
            .map_err(|_| parse_err(path, lineno, "bad class id"))?;
        let points: Vec<f64> = toks
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(path, lineno, format!("bad number {:?}", t)))
            })
            .collect::<Result<_>>()?;
        if points.len() != want {
            return Err(parse_err(
                path,
                lineno,
                format!("sample has {} values, want {}", points.len(), want),
            ));
        }
        let nc = classes
            .ok_or_else(|| parse_err(path, lineno, "sample before 'classes:' header"))?;
        if class >= nc {
            return Err(parse_err(
                path,
                lineno,
                format!("class {} out of range for {} classes", class, nc),
            ));
        }
        samples.push(HandshapeSample { class, points });
    }

    if !saw_format {
        return Err(Error::Schema(format!(
            "{}: empty handshape file",
            path.display()
        )));
    }
    let classes =
        classes.ok_or_else(|| Error::Schema(format!("{}: missing classes", path.display())))?;
    Ok(HandshapeDataset { classes, samples })
}

pub fn read_handshape_file(path: &Path) -> Result<HandshapeDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    parse_handshape_text(&text, path)
}

pub fn handshape_to_text(ds: &HandshapeDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format: 1");
    let _ = writeln!(out, "classes: {}", ds.classes);
    for s in &ds.samples {
        let _ = write!(out, "{}", s.class);
        for v in &s.points {
            let _ = write!(out, " {}", v);
        }
        out.push('\n');
    }
    out
}

pub fn write_handshape_file(path: &Path, ds: &HandshapeDataset) -> Result<()> {
    std::fs::write(path, handshape_to_text(ds))?;
    Ok(())
}

/// Index of a pose corpus: every sequence id with its gloss ids in temporal
/// order. Gloss frequency counts derive from it, so recognition accuracy can
/// be restricted to classes seen often enough in training.
#[derive(Debug, Clone, PartialEq)]
pub struct DataManifest {
    pub classes: usize,
    pub sequences: Vec<(String, Vec<usize>)>,
}

impl DataManifest {
    /// Occurrences of each gloss across all sequences. Absent ids never
    /// appear in any sequence.
    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for (_, glosses) in &self.sequences {
            for &g in glosses {
                *counts.entry(g).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn glosses_for(&self, id: &str) -> Option<&[usize]> {
        self.sequences
            .iter()
            .find(|(name, _)| name == id)
            .map(|(_, g)| g.as_slice())
    }
}

pub fn parse_manifest_text(text: &str, path: &Path) -> Result<DataManifest> {
    let mut classes: Option<usize> = None;
    let mut sequences: Vec<(String, Vec<usize>)> = Vec::new();
    let mut saw_format = false;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !saw_format {
            match line.strip_prefix("format:") {
                Some(v) if v.trim() == "1" => {
                    saw_format = true;
                    continue;
                }
                _ => return Err(parse_err(path, lineno, "first line must be 'format: 1'")),
            }
        }
        if let Some(v) = line.strip_prefix("classes:") {
            classes = Some(
                v.trim()
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad class count {:?}", v.trim())))?,
            );
            continue;
        }
        let Some(rest) = line.strip_prefix("seq ") else {
            return Err(parse_err(path, lineno, format!("unrecognized line {:?}", line)));
        };
        let mut toks = rest.split_whitespace();
        let id = toks
            .next()
            .ok_or_else(|| parse_err(path, lineno, "seq line without an id"))?
            .to_string();
        let glosses: Vec<usize> = toks
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| parse_err(path, lineno, format!("bad gloss id {:?}", t)))
            })
            .collect::<Result<_>>()?;
        let nc =
            classes.ok_or_else(|| parse_err(path, lineno, "seq line before 'classes:' header"))?;
        if let Some(&g) = glosses.iter().find(|&&g| g >= nc) {
            return Err(parse_err(
                path,
                lineno,
                format!("gloss {} out of range for {} classes", g, nc),
            ));
        }
        if sequences.iter().any(|(name, _)| *name == id) {
            return Err(parse_err(path, lineno, format!("duplicate sequence id {:?}", id)));
        }
        sequences.push((id, glosses));
    }

    if !saw_format {
        return Err(Error::Schema(format!("{}: empty manifest", path.display())));
    }
    let classes =
        classes.ok_or_else(|| Error::Schema(format!("{}: missing classes", path.display())))?;
    Ok(DataManifest { classes, sequences })
}

pub fn read_manifest_file(path: &Path) -> Result<DataManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    parse_manifest_text(&text, path)
}

pub fn manifest_to_text(m: &DataManifest) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format: 1");
    let _ = writeln!(out, "classes: {}", m.classes);
    for (id, glosses) in &m.sequences {
        let _ = write!(out, "seq {}", id);
        for g in glosses {
            let _ = write!(out, " {}", g);
        }
        out.push('\n');
    }
    out
}

pub fn write_manifest_file(path: &Path, m: &DataManifest) -> Result<()> {
    std::fs::write(path, manifest_to_text(m))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;

    fn sample_seq() -> PoseSequence {
        PoseSequence::new(
            2,
            vec![0.1, -0.25, 1.0 / 3.0, 1e-17, 2.5, -0.0, 0.75, 42.0],
            25.0,
            Some(vec![Label::Boundary, Label::Interior]),
        )
        .unwrap()
    }

    #[test]
    fn pose_roundtrip_is_bit_exact() {
        let seq = sample_seq();
        let text = pose_to_text(&seq);
        let back = parse_pose_text(&text, Path::new("mem")).unwrap();
        assert_eq!(back.joints(), seq.joints());
        assert_eq!(back.fps, seq.fps);
        assert_eq!(back.labels, seq.labels);
        for (a, b) in back.coords().iter().zip(seq.coords()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn pose_file_io_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.pose");
        let seq = sample_seq();
        write_pose_file(&path, &seq).unwrap();
        let back = read_pose_file(&path).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn confidence_triplets_are_accepted_and_dropped() {
        let text = "format: 1\nfps: 25\njoints: 2\n1 2 0.9 3 4 0.8\n";
        let seq = parse_pose_text(text, Path::new("mem")).unwrap();
        assert_eq!(seq.frames(), 1);
        assert_eq!(seq.coords(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn header_errors_are_reported_with_lines() {
        let bad = "format: 2\nfps: 25\n";
        assert!(matches!(
            parse_pose_text(bad, Path::new("m")).unwrap_err(),
            Error::Schema(_)
        ));
        let bad = "fps: 25\n";
        assert!(matches!(
            parse_pose_text(bad, Path::new("m")).unwrap_err(),
            Error::Parse { line: 1, .. }
        ));
        let bad = "format: 1\nfps: 25\n1 2 3 4\n";
        assert!(matches!(
            parse_pose_text(bad, Path::new("m")).unwrap_err(),
            Error::Parse { line: 3, .. }
        ));
        let bad = "format: 1\nfps: 25\njoints: 2\n1 2 3\n";
        assert!(matches!(
            parse_pose_text(bad, Path::new("m")).unwrap_err(),
            Error::Parse { line: 4, .. }
        ));
    }

    #[test]
    fn label_count_mismatch_is_schema_error() {
        let bad = "format: 1\nfps: 25\njoints: 1\nlabels: BI\n0 0\n";
        assert!(matches!(
            parse_pose_text(bad, Path::new("m")).unwrap_err(),
            Error::Schema(_)
        ));
    }

    #[test]
    fn handshape_roundtrip() {
        let ds = HandshapeDataset {
            classes: 3,
            samples: vec![
                HandshapeSample {
                    class: 0,
                    points: (0..42).map(|i| i as f64 / 7.0).collect(),
                },
                HandshapeSample {
                    class: 2,
                    points: vec![-0.5; 42],
                },
            ],
        };
        let text = handshape_to_text(&ds);
        let back = parse_handshape_text(&text, Path::new("mem")).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.class_counts(), vec![1, 0, 1]);
    }

    #[test]
    fn handshape_rejects_out_of_range_class_and_short_rows() {
        let bad = "format: 1\nclasses: 2\n5 ".to_string() + &"0 ".repeat(42) + "\n";
        assert!(parse_handshape_text(&bad, Path::new("m")).is_err());
        let bad = "format: 1\nclasses: 2\n1 0 0\n";
        assert!(parse_handshape_text(bad, Path::new("m")).is_err());
    }

    #[test]
    fn manifest_roundtrip_and_counts() {
        let m = DataManifest {
            classes: 6,
            sequences: vec![
                ("train_000".into(), vec![2, 5, 2]),
                ("train_001".into(), vec![0]),
            ],
        };
        let text = manifest_to_text(&m);
        let back = parse_manifest_text(&text, Path::new("mem")).unwrap();
        assert_eq!(back, m);
        let counts = back.class_counts();
        assert_eq!(counts.get(&2), Some(&2));
        assert_eq!(counts.get(&5), Some(&1));
        assert_eq!(counts.get(&0), Some(&1));
        assert_eq!(counts.get(&1), None);
        assert_eq!(back.glosses_for("train_001"), Some(&[0][..]));
        assert_eq!(back.glosses_for("train_xyz"), None);
    }

    #[test]
    fn manifest_file_roundtrip() {
        let m = DataManifest {
            classes: 3,
            sequences: vec![("a".into(), vec![0, 1, 2])],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        write_manifest_file(&path, &m).unwrap();
        assert_eq!(read_manifest_file(&path).unwrap(), m);
    }

    #[test]
    fn manifest_rejects_bad_lines() {
        let bad = "format: 1\nclasses: 2\nseq a 0 7\n";
        match parse_manifest_text(bad, Path::new("m")).unwrap_err() {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("out of range"));
            }
            other => panic!("unexpected error {other:?}"),
        }
        let dup = "format: 1\nclasses: 2\nseq a 0\nseq a 1\n";
        assert!(matches!(
            parse_manifest_text(dup, Path::new("m")).unwrap_err(),
            Error::Parse { line: 4, .. }
        ));
        let noisy = "format: 1\nclasses: 2\nrows a 0\n";
        assert!(parse_manifest_text(noisy, Path::new("m")).is_err());
        assert!(parse_manifest_text("", Path::new("m")).is_err());
    }
}
