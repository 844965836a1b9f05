//! Gloss recognition over decoded segments.
//!
//! Once a sequence is cut into spans, each span still needs a sign name.
//! The classifier here reuses the handshape architecture with its output
//! head sized to the gloss vocabulary: per-frame hand features are
//! mean-pooled over the span and a single linear layer names the sign.
//! That is deliberately small; it exists to score segment quality
//! end-to-end, not to compete with a full recognition model.
//!
//! Hand features are renormalized per frame, so they are unaffected by the
//! whole-body normalization the segmentation pipeline applies. Examples are
//! therefore cut straight from raw sequences.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{extract_dominant_hand, hand_features, PoseSequence};
use crate::error::{Error, Result};
use crate::metrics::SegmentSpan;
use crate::models::{Bind, HandshapeNetwork};
use crate::tensor::{Graph, ParamStore, Tensor};

use super::adam::{Adam, GradAccum};
use super::config::TrainConfig;
use super::losses::handshape_loss;
use super::stages::{argmax_rows, improved, split_indices, EpochRecord, StageOutcome};

/// One span cut out of a sequence, ready for classification.
#[derive(Debug, Clone)]
pub struct SegmentExample {
    /// Hand features for the span's frames, `[duration, 21, 2]`.
    pub hand: Tensor,
    pub gloss: usize,
}

/// Rows `start..=end` of a `[t, j, c]` feature tensor.
fn slice_frames(feats: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    let shape = feats.shape();
    if shape.len() != 3 {
        return Err(Error::shape(format!("frame slicing wants 3 axes, got {:?}", shape)));
    }
    if end >= shape[0] {
        return Err(Error::data(format!(
            "span ends at frame {} but the sequence has {}",
            end, shape[0]
        )));
    }
    let row = shape[1] * shape[2];
    let data = feats.data()[start * row..(end + 1) * row].to_vec();
    Tensor::new(vec![end - start + 1, shape[1], shape[2]], data)
}

/// Cut labeled training examples out of one sequence. Every span must carry
/// a gloss and lie inside the sequence.
pub fn segment_examples(
    seq: &PoseSequence,
    spans: &[SegmentSpan],
) -> Result<Vec<SegmentExample>> {
    let hand = extract_dominant_hand(seq)?;
    let feats = hand_features(&hand)?;
    spans
        .iter()
        .enumerate()
        .map(|(i, span)| {
            span.validate()?;
            let gloss = span
                .gloss
                .ok_or_else(|| Error::data(format!("span {} carries no gloss", i)))?;
            let hand = slice_frames(&feats, span.start, span.end)?;
            Ok(SegmentExample { hand, gloss })
        })
        .collect()
}

fn check_example_shapes(net: &HandshapeNetwork, examples: &[SegmentExample]) -> Result<()> {
    for (i, ex) in examples.iter().enumerate() {
        let shape = ex.hand.shape();
        if shape.len() != 3 || shape[0] == 0 || shape[1] != net.joints() || shape[2] != 2 {
            return Err(Error::shape(format!(
                "segment example {} has shape {:?}, want [t, {}, 2]",
                i,
                shape,
                net.joints()
            )));
        }
        if ex.gloss >= net.cfg.num_classes {
            return Err(Error::data(format!(
                "segment example {} names gloss {} outside 0..{}",
                i, ex.gloss, net.cfg.num_classes
            )));
        }
    }
    Ok(())
}

fn segment_argmax(
    net: &HandshapeNetwork,
    store: &ParamStore,
    hand: &Tensor,
) -> Result<usize> {
    let mut g = Graph::new();
    let mut bind = Bind::new(store, false);
    let x = g.leaf(hand.clone(), false);
    let logits = net.forward_segment(&mut g, &mut bind, x)?;
    Ok(argmax_rows(g.value(logits))[0])
}

/// Train the segment-level gloss classifier from scratch. Spans vary in
/// length, so every example runs through its own graph; gradients are
/// averaged per batch.
pub fn train_recognizer(
    net: &HandshapeNetwork,
    examples: &[SegmentExample],
    tcfg: &TrainConfig,
) -> Result<StageOutcome> {
    tcfg.validate()?;
    if examples.is_empty() {
        return Err(Error::data("no segment examples"));
    }
    check_example_shapes(net, examples)?;
    let distinct: std::collections::BTreeSet<usize> =
        examples.iter().map(|e| e.gloss).collect();
    if distinct.len() < 2 {
        return Err(Error::data(format!(
            "gloss training needs at least 2 distinct classes, got {}",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut store = ParamStore::new();
    net.init_params(&mut store, &mut rng)?;
    store.set_meta("stage", "recognizer");
    let (train_idx, val_idx) = split_indices(examples.len(), tcfg.val_fraction, &mut rng);
    let mut adam = Adam::new(tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.eps)?;
    let mut log = Vec::with_capacity(tcfg.epochs);
    let mut best: Option<(ParamStore, usize, f64)> = None;
    let mut order = train_idx;

    for epoch in 1..=tcfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut members = 0usize;
        let mut correct = 0usize;
        for batch in order.chunks(tcfg.batch_size) {
            let mut accum = GradAccum::new();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &examples[i];
                let mut g = Graph::new();
                let mut bind = Bind::new(&store, true);
                let x = g.leaf(ex.hand.clone(), false);
                let logits = net.forward_segment(&mut g, &mut bind, x)?;
                let loss = handshape_loss(&mut g, logits, &[ex.gloss])?;
                g.backward(loss)?;
                accum.add(&g, &bind.bound, scale)?;
                loss_sum += g.value(loss).item();
                members += 1;
                if argmax_rows(g.value(logits))[0] == ex.gloss {
                    correct += 1;
                }
            }
            adam.step(&mut store, &accum.into_grads())?;
        }

        let val_top1 = if val_idx.is_empty() {
            None
        } else {
            let mut hits = 0usize;
            for &i in &val_idx {
                if segment_argmax(net, &store, &examples[i].hand)? == examples[i].gloss {
                    hits += 1;
                }
            }
            Some(hits as f64 / val_idx.len() as f64)
        };
        let loss = loss_sum / members.max(1) as f64;
        let mut record = EpochRecord {
            epoch,
            loss,
            frame_loss: None,
            boundary_loss: None,
            count_gap: None,
            train_acc: (members > 0).then(|| correct as f64 / members as f64),
            val_mf1b: None,
            val_top1,
            best: false,
        };
        if improved(best.as_ref().map(|(_, _, m)| *m), val_top1, loss) {
            let mut snap = store.clone();
            snap.set_meta("best_epoch", &epoch.to_string());
            best = Some((snap, epoch, val_top1.unwrap_or(loss)));
            record.best = true;
        }
        log.push(record);
    }

    let (store, best_epoch, best_metric) = best.expect("at least one epoch ran");
    Ok(StageOutcome { store, log, best_epoch, best_metric })
}

/// Name the sign in each span of `seq`. Spans come from a decoder, so they
/// carry no gloss; the result is one predicted gloss per span, in order.
pub fn recognize_spans(
    net: &HandshapeNetwork,
    store: &ParamStore,
    seq: &PoseSequence,
    spans: &[SegmentSpan],
) -> Result<Vec<usize>> {
    if spans.is_empty() {
        return Ok(Vec::new());
    }
    let hand = extract_dominant_hand(seq)?;
    let feats = hand_features(&hand)?;
    spans
        .iter()
        .map(|span| {
            span.validate()?;
            let rows = slice_frames(&feats, span.start, span.end)?;
            segment_argmax(net, store, &rows)
        })
        .collect()
}
