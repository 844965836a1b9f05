//! `recognize`: score gloss recognition over predicted segments that matched
//! a ground-truth sign.
//!
//! Predicted spans that already carry a gloss are scored as-is, so a span
//! file annotated by an oracle needs no classifier. Spans without a gloss go
//! through a segment classifier: either a checkpoint passed with
//! `--recognizer`, or one trained here from the training corpus's
//! ground-truth segments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use signseg::data::PoseSequence;
use signseg::metrics::{match_tolerance, read_spans_file, SegmentSpan};
use signseg::posefile::read_manifest_file;
use signseg::tensor::{load_checkpoint, save_checkpoint, ParamStore};
use signseg::train::{recognize_spans, segment_examples, train_recognizer, FileConfig};
use signseg::{Error, Result};

use crate::corpus::{check_pred_ids, group_spans, load_pose_dir, spans_for};
use crate::runlog::RunLog;

/// One matched pair's glosses: ground truth and prediction.
struct ScoredPair {
    gt_gloss: usize,
    pred_gloss: usize,
}

pub fn run(
    cfg: &FileConfig,
    pred: &Path,
    gt: &Path,
    poses: &Path,
    train_data: &Path,
    recognizer: Option<&Path>,
    out: &Path,
    log: &mut RunLog,
) -> Result<()> {
    let pred_records = read_spans_file(pred)?;
    log.input(pred)?;
    let gt_records = read_spans_file(gt)?;
    log.input(gt)?;
    let manifest_path = train_data.join("manifest.txt");
    let manifest = read_manifest_file(&manifest_path)?;
    log.input(&manifest_path)?;
    let counts = manifest.class_counts();

    let gt_groups = group_spans(&gt_records);
    let pred_groups = group_spans(&pred_records);
    check_pred_ids(&gt_groups, &pred_groups)?;

    let named = load_pose_dir(poses)?;
    for (id, _) in &named {
        log.input(&poses.join(format!("{}.txt", id)))?;
    }
    let seq_of = |id: &str| -> Result<&PoseSequence> {
        named
            .iter()
            .find(|(nid, _)| nid == id)
            .map(|(_, seq)| seq)
            .ok_or_else(|| Error::data(format!("no pose file for sequence {}", id)))
    };

    // Matched pairs per sequence, with the pred spans that still need a
    // classifier kept aside.
    struct SeqPairs<'a> {
        id: &'a str,
        /// (gt gloss, pred span) for each matched pair, in gt order.
        pairs: Vec<(usize, SegmentSpan)>,
    }
    let mut per_seq = Vec::new();
    for (id, g) in &gt_groups {
        let p = spans_for(&pred_groups, id);
        let result = match_tolerance(g, p, cfg.eval.tolerance_basis)?;
        let mut pairs = Vec::with_capacity(result.pairs.len());
        for &(gi, pi) in &result.pairs {
            let gt_gloss = g[gi].gloss.ok_or_else(|| {
                Error::data(format!("matched ground-truth span in {} carries no gloss", id))
            })?;
            pairs.push((gt_gloss, p[pi]));
        }
        per_seq.push(SeqPairs { id, pairs });
    }

    let needs_classifier =
        per_seq.iter().any(|s| s.pairs.iter().any(|(_, span)| span.gloss.is_none()));
    let store: Option<ParamStore> = match (recognizer, needs_classifier) {
        (Some(path), _) => Some(load_recognizer(path, log)?),
        (None, true) => Some(train_builtin(cfg, &manifest, train_data, out, log)?),
        (None, false) => None,
    };
    let net = cfg.hand_network(manifest.classes)?;

    let mut scored: Vec<ScoredPair> = Vec::new();
    for s in &per_seq {
        let bare: Vec<SegmentSpan> =
            s.pairs.iter().filter(|(_, span)| span.gloss.is_none()).map(|(_, sp)| *sp).collect();
        let mut inferred = if bare.is_empty() {
            Vec::new()
        } else {
            let store = store.as_ref().expect("classifier present when bare spans exist");
            recognize_spans(&net, store, seq_of(s.id)?, &bare)?
        }
        .into_iter();
        for (gt_gloss, span) in &s.pairs {
            let pred_gloss = match span.gloss {
                Some(g) => g,
                None => inferred.next().expect("one inferred gloss per bare span"),
            };
            scored.push(ScoredPair { gt_gloss: *gt_gloss, pred_gloss });
        }
    }

    let text = accuracy_table(&scored, &counts, &cfg.eval.ks);
    let table_path = out.join("recognition.txt");
    std::fs::write(&table_path, &text)?;
    log.output(&table_path)?;

    println!("scored {} matched segments, table at {}", scored.len(), table_path.display());
    Ok(())
}

fn load_recognizer(path: &Path, log: &mut RunLog) -> Result<ParamStore> {
    let store = load_checkpoint(path)?;
    log.input(path)?;
    match store.meta("stage") {
        Some("recognizer") => Ok(store),
        tag => Err(Error::Prerequisite(format!(
            "checkpoint {} is not a gloss recognizer (stage tag {:?})",
            path.display(),
            tag
        ))),
    }
}

/// Train the segment classifier from the training corpus's ground-truth
/// spans and keep the checkpoint next to the table.
fn train_builtin(
    cfg: &FileConfig,
    manifest: &signseg::posefile::DataManifest,
    train_data: &Path,
    out: &Path,
    log: &mut RunLog,
) -> Result<ParamStore> {
    let gt_path = train_data.join("gt_spans.txt");
    let gt_records = read_spans_file(&gt_path)?;
    log.input(&gt_path)?;
    let groups = group_spans(&gt_records);

    let dir = train_data.join("poses");
    let named = load_pose_dir(&dir)?;
    let mut examples = Vec::new();
    for (id, seq) in &named {
        let spans = spans_for(&groups, id);
        if spans.is_empty() {
            continue;
        }
        log.input(&dir.join(format!("{}.txt", id)))?;
        examples.extend(segment_examples(seq, spans)?);
    }

    let net = cfg.hand_network(manifest.classes)?;
    let outcome = train_recognizer(&net, &examples, &cfg.recognizer_config())?;

    let ckpt_path = out.join("recognizer.ckpt");
    save_checkpoint(&outcome.store, &ckpt_path)?;
    log.output(&ckpt_path)?;
    let log_path = out.join("recognizer_log.txt");
    std::fs::write(&log_path, outcome.log_text())?;
    log.output(&log_path)?;
    Ok(outcome.store)
}

/// Top-1 accuracy restricted to pairs whose ground-truth gloss has at least
/// `k` occurrences in the training manifest, one row per `k`.
fn accuracy_table(scored: &[ScoredPair], counts: &BTreeMap<usize, usize>, ks: &[usize]) -> String {
    let mut text = String::from("format: 1\n");
    let _ = writeln!(text, "pairs = {}", scored.len());
    for &k in ks {
        let mut qualifying = 0usize;
        let mut hits = 0usize;
        for pair in scored {
            if counts.get(&pair.gt_gloss).copied().unwrap_or(0) < k {
                continue;
            }
            qualifying += 1;
            hits += (pair.pred_gloss == pair.gt_gloss) as usize;
        }
        let shown = if qualifying == 0 {
            "undefined".to_string()
        } else {
            format!("{:.4}", 100.0 * hits as f64 / qualifying as f64)
        };
        let _ = writeln!(text, "k={} qualifying={} top1={}", k, qualifying, shown);
    }
    text
}
