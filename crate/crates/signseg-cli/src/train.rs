//! `train`: run one training stage over a generated corpus and write the
//! resulting checkpoint plus its epoch log.

use std::path::Path;

use signseg::posefile::read_handshape_file;
use signseg::tensor::{load_checkpoint, save_checkpoint, ParamStore};
use signseg::train::{train_stage1, train_stage2, train_stage3, FileConfig, StageOutcome};
use signseg::{Error, Result};

use crate::corpus::load_pose_dir;
use crate::runlog::RunLog;

fn required<'a>(path: Option<&'a Path>, flag: &str) -> Result<&'a Path> {
    path.ok_or_else(|| Error::Prerequisite(format!("stage 3 needs {} <checkpoint>", flag)))
}

fn load_store(path: &Path, log: &mut RunLog) -> Result<ParamStore> {
    let store = load_checkpoint(path)?;
    log.input(path)?;
    Ok(store)
}

pub fn run(
    cfg: &FileConfig,
    stage: u8,
    data: &Path,
    stage1: Option<&Path>,
    stage2: Option<&Path>,
    out: &Path,
    log: &mut RunLog,
) -> Result<()> {
    let tcfg = cfg.train_config(stage)?;
    let outcome: StageOutcome = match stage {
        1 => {
            let seqs = load_labeled_sequences(data, log)?;
            let net = cfg.seg_network()?;
            train_stage1(&net, &seqs, &tcfg, &cfg.loss, &cfg.eval.boundary_thresholds)?
        }
        2 => {
            let hands_path = data.join("handshapes.txt");
            let dataset = read_handshape_file(&hands_path)?;
            log.input(&hands_path)?;
            let net = cfg.hand_network(dataset.classes)?;
            train_stage2(&net, &dataset, &tcfg)?
        }
        3 => {
            let s1 = load_store(required(stage1, "--stage1")?, log)?;
            let s2 = load_store(required(stage2, "--stage2")?, log)?;
            let seqs = load_labeled_sequences(data, log)?;
            let seg_net = cfg.seg_network()?;
            let hand_net = cfg.hand_network(cfg.hand.classes)?;
            let fusion = cfg.fusion_module()?;
            train_stage3(
                &seg_net,
                &hand_net,
                &fusion,
                &seqs,
                &s1,
                &s2,
                &tcfg,
                &cfg.loss,
                &cfg.eval.boundary_thresholds,
            )?
        }
        other => return Err(Error::config(format!("no stage {} exists", other))),
    };

    let ckpt_path = out.join("checkpoint.ckpt");
    save_checkpoint(&outcome.store, &ckpt_path)?;
    log.output(&ckpt_path)?;

    let log_path = out.join("train_log.txt");
    std::fs::write(&log_path, outcome.log_text())?;
    log.output(&log_path)?;

    println!(
        "stage {} done: best epoch {} with metric {:.4}, checkpoint at {}",
        stage,
        outcome.best_epoch,
        outcome.best_metric,
        ckpt_path.display()
    );
    Ok(())
}

fn load_labeled_sequences(
    data: &Path,
    log: &mut RunLog,
) -> Result<Vec<signseg::data::PoseSequence>> {
    let dir = data.join("poses");
    let named = load_pose_dir(&dir)?;
    let mut seqs = Vec::with_capacity(named.len());
    for (id, seq) in named {
        if seq.labels.is_none() {
            return Err(Error::data(format!("sequence {} carries no frame labels", id)));
        }
        log.input(&dir.join(format!("{}.txt", id)))?;
        seqs.push(seq);
    }
    Ok(seqs)
}
