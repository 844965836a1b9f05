//! `segment`: run inference over a directory of pose files and write the
//! predicted frame labels plus the spans decoded from them.

use std::path::Path;

use signseg::data::labels_to_string;
use signseg::metrics::{decode_bio, SpanRecord};
use signseg::tensor::load_checkpoint;
use signseg::train::{infer_labels, FileConfig};
use signseg::{Error, Result};

use crate::corpus::load_pose_dir;
use crate::runlog::RunLog;

pub fn run(
    cfg: &FileConfig,
    checkpoint: &Path,
    poses: &Path,
    threads: usize,
    out: &Path,
    log: &mut RunLog,
) -> Result<()> {
    let store = load_checkpoint(checkpoint)?;
    log.input(checkpoint)?;
    match store.meta("stage") {
        Some("1") | Some("3") => {}
        Some(other) => {
            return Err(Error::Prerequisite(format!(
                "checkpoint {} is a stage {} artifact; segmentation needs stage 1 or 3",
                checkpoint.display(),
                other
            )))
        }
        None => {
            return Err(Error::Prerequisite(format!(
                "checkpoint {} carries no stage tag",
                checkpoint.display()
            )))
        }
    }

    let named = load_pose_dir(poses)?;
    for (id, _) in &named {
        log.input(&poses.join(format!("{}.txt", id)))?;
    }

    let seg_net = cfg.seg_network()?;
    let hand_net = cfg.hand_network(cfg.hand.classes)?;
    let fusion = cfg.fusion_module()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {}", e)))?;
    let labeled: Result<Vec<_>> = pool.install(|| {
        use rayon::prelude::*;
        named
            .par_iter()
            .map(|(id, seq)| {
                let labels = infer_labels(&seg_net, &hand_net, &fusion, &store, seq)?;
                Ok((id.clone(), labels))
            })
            .collect()
    });
    let labeled = labeled?;

    let mut records = Vec::new();
    let mut label_lines = String::from("format: 1\n");
    for (id, labels) in &labeled {
        let decoded = decode_bio(labels);
        for span in decoded.spans {
            records.push(SpanRecord { seq: id.clone(), span, matched: false });
        }
        label_lines.push_str(id);
        label_lines.push(' ');
        label_lines.push_str(&labels_to_string(labels));
        label_lines.push('\n');
    }

    let spans_path = out.join("spans.txt");
    signseg::metrics::write_spans_file(&spans_path, &records)?;
    log.output(&spans_path)?;

    let labels_path = out.join("labels.txt");
    std::fs::write(&labels_path, label_lines)?;
    log.output(&labels_path)?;

    println!(
        "segmented {} sequences into {} spans, artifacts in {}",
        labeled.len(),
        records.len(),
        out.display()
    );
    Ok(())
}
