//! `gen-data`: write a synthetic corpus as pose files, a handshape dataset,
//! ground-truth spans, and the gloss manifest.

use std::path::Path;

use signseg::metrics::SpanRecord;
use signseg::metrics::SegmentSpan;
use signseg::posefile::{
    write_handshape_file, write_manifest_file, write_pose_file, DataManifest,
};
use signseg::synth::{generate_handshape_dataset, generate_pose_corpus};
use signseg::train::FileConfig;
use signseg::Result;

use crate::runlog::RunLog;

pub fn sequence_id(index: usize) -> String {
    format!("seq_{:04}", index)
}

pub fn run(cfg: &FileConfig, out: &Path, log: &mut RunLog) -> Result<()> {
    let corpus = generate_pose_corpus(&cfg.gen)?;
    let poses_dir = out.join("poses");
    std::fs::create_dir_all(&poses_dir)?;

    let mut gt_records = Vec::new();
    let mut manifest_rows = Vec::with_capacity(corpus.len());
    for (i, generated) in corpus.iter().enumerate() {
        let id = sequence_id(i);
        let path = poses_dir.join(format!("{}.txt", id));
        write_pose_file(&path, &generated.seq)?;
        log.output(&path)?;

        let mut glosses = Vec::with_capacity(generated.segments.len());
        for seg in &generated.segments {
            gt_records.push(SpanRecord {
                seq: id.clone(),
                span: SegmentSpan::with_gloss(seg.start, seg.end, seg.gloss),
                matched: false,
            });
            glosses.push(seg.gloss);
        }
        manifest_rows.push((id, glosses));
    }

    let gt_path = out.join("gt_spans.txt");
    signseg::metrics::write_spans_file(&gt_path, &gt_records)?;
    log.output(&gt_path)?;

    let hands = generate_handshape_dataset(&cfg.hand)?;
    let hands_path = out.join("handshapes.txt");
    write_handshape_file(&hands_path, &hands)?;
    log.output(&hands_path)?;

    let manifest = DataManifest { classes: cfg.gen.num_glosses, sequences: manifest_rows };
    let manifest_path = out.join("manifest.txt");
    write_manifest_file(&manifest_path, &manifest)?;
    log.output(&manifest_path)?;

    println!(
        "wrote {} pose sequences, {} ground-truth segments, {} handshape samples to {}",
        corpus.len(),
        gt_records.len(),
        hands.samples.len(),
        out.display()
    );
    Ok(())
}
