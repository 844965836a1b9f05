//! The three training stages: segmentation backbone, handshape classifier,
//! and gated fusion on top of both.
//!
//! All stages share one batching scheme: every batch member gets its own
//! graph and fresh parameter bindings, member gradients are averaged into a
//! single Adam step, and batch-norm running statistics absorb each member's
//! batch statistics. Checkpoint selection is by held-out metric (mean
//! boundary F1 for the segmentation stages, top-1 accuracy for handshapes);
//! without a validation split the lowest training loss wins.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::{extract_dominant_hand, hand_features, Label, PoseSequence};
use crate::error::{Error, Result};
use crate::metrics::{boundary_frames, mf1b, Averaging};
use crate::models::{
    apply_bn_updates, Bind, FusionModule, HandshapeNetwork, SegmentationNetwork,
};
use crate::posefile::HandshapeDataset;
use crate::tensor::{GateMode, Graph, ParamStore, Tensor, Var};
use crate::train::adam::{Adam, GradAccum};
use crate::train::config::TrainConfig;
use crate::train::losses::{
    handshape_loss, hard_boundary_count_gap, seg_loss_parts, LossConfig, SegLossParts,
};

/// One epoch of a training log. Fields that a stage does not track stay
/// `None` and are skipped by [`EpochRecord::to_line`].
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub frame_loss: Option<f64>,
    pub boundary_loss: Option<f64>,
    pub count_gap: Option<f64>,
    pub train_acc: Option<f64>,
    pub val_mf1b: Option<f64>,
    pub val_top1: Option<f64>,
    /// Whether this epoch became the selected checkpoint.
    pub best: bool,
}

impl EpochRecord {
    /// Fixed-order `key value` log line.
    pub fn to_line(&self) -> String {
        let mut line = format!("epoch {} loss {:.6}", self.epoch, self.loss);
        for (key, value) in [
            ("frame_loss", self.frame_loss),
            ("boundary_loss", self.boundary_loss),
            ("count_gap", self.count_gap),
            ("train_acc", self.train_acc),
            ("val_mf1b", self.val_mf1b),
            ("val_top1", self.val_top1),
        ] {
            if let Some(v) = value {
                line.push_str(&format!(" {} {:.6}", key, v));
            }
        }
        if self.best {
            line.push_str(" best");
        }
        line
    }
}

/// What a finished stage hands back: the selected checkpoint and how
/// training went.
#[derive(Debug)]
pub struct StageOutcome {
    pub store: ParamStore,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Held-out selection metric of the best epoch, or its training loss
    /// when no validation split was requested.
    pub best_metric: f64,
}

impl StageOutcome {
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for record in &self.log {
            out.push_str(&record.to_line());
            out.push('\n');
        }
        out
    }
}

/// Digest over every parameter whose name starts with `prefix`, independent
/// of store insertion order. Used to prove a subnetwork stayed untouched.
pub fn params_digest(store: &ParamStore, prefix: &str) -> String {
    let mut names: Vec<&str> = store.names().filter(|n| n.starts_with(prefix)).collect();
    names.sort_unstable();
    let mut hasher = Sha256::new();
    for name in names {
        let tensor = store.get(name).expect("listed name exists");
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        for dim in tensor.shape() {
            hasher.update((*dim as u64).to_le_bytes());
        }
        for v in tensor.data() {
            hasher.update(v.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{:02x}", b));
    }
    out
}

/// Shuffled train/validation index split. Validation rounds to
/// `n * val_fraction` sequences but always leaves at least one for training.
pub(crate) fn split_indices(
    n: usize,
    val_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut val_count = (n as f64 * val_fraction).round() as usize;
    if val_count >= n {
        val_count = n - 1;
    }
    let val = idx.split_off(n - val_count);
    (idx, val)
}

/// A normalized, length-padded training sequence with precomputed inputs.
struct SegItem {
    labels: Vec<Label>,
    frame_valid: Vec<bool>,
    features: Tensor,
    hand: Option<Tensor>,
    flip_features: Option<Tensor>,
    flip_hand: Option<Tensor>,
}

impl SegItem {
    fn features(&self, mirrored: bool) -> &Tensor {
        if mirrored {
            self.flip_features.as_ref().expect("mirrored variant prepared")
        } else {
            &self.features
        }
    }
}

fn prepare_seg_items(
    seqs: &[PoseSequence],
    t_max: usize,
    with_flip: bool,
    with_hand: bool,
) -> Result<Vec<SegItem>> {
    if seqs.is_empty() {
        return Err(Error::data("no training sequences"));
    }
    seqs.iter()
        .enumerate()
        .map(|(i, seq)| {
            let mut padded = seq.clone();
            padded.assert_finite()?;
            padded.normalize();
            padded.pad_to_length(t_max);
            let labels = padded
                .labels
                .clone()
                .ok_or_else(|| Error::data(format!("sequence {} has no labels", i)))?;
            let frame_valid: Vec<bool> = labels.iter().map(|&l| l != Label::Padding).collect();
            let features = padded.kinematic_features()?;
            let hand = if with_hand {
                Some(hand_features(&extract_dominant_hand(&padded)?)?)
            } else {
                None
            };
            let (flip_features, flip_hand) = if with_flip {
                let mut mirrored = padded.clone();
                mirrored.horizontal_flip()?;
                let flip_hand = if with_hand {
                    Some(hand_features(&extract_dominant_hand(&mirrored)?)?)
                } else {
                    None
                };
                (Some(mirrored.kinematic_features()?), flip_hand)
            } else {
                (None, None)
            };
            Ok(SegItem { labels, frame_valid, features, hand, flip_features, flip_hand })
        })
        .collect()
}

pub(crate) fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let cols = *t.shape().last().expect("nonempty shape");
    t.data()
        .chunks_exact(cols)
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                .map(|(i, _)| i)
                .expect("nonempty row")
        })
        .collect()
}

/// Frame labels by row-wise argmax over `[t, 4]` logits.
pub fn predicted_labels(logits: &Tensor) -> Result<Vec<Label>> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[1] != Label::COUNT {
        return Err(Error::shape(format!(
            "label decoding wants [t, {}] logits, got {:?}",
            Label::COUNT,
            shape
        )));
    }
    argmax_rows(logits).into_iter().map(Label::from_index).collect()
}

/// (correct, total) over non-padding frames.
fn frame_hits(logits: &Tensor, labels: &[Label]) -> Result<(usize, usize)> {
    let pred = predicted_labels(logits)?;
    if pred.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} logit rows against {} labels",
            pred.len(),
            labels.len()
        )));
    }
    let mut correct = 0;
    let mut total = 0;
    for (p, &l) in pred.iter().zip(labels) {
        if l == Label::Padding {
            continue;
        }
        total += 1;
        if *p == l {
            correct += 1;
        }
    }
    Ok((correct, total))
}

/// Running sums over one epoch's batch members.
#[derive(Default)]
struct EpochSums {
    members: usize,
    loss: f64,
    frame: f64,
    count: f64,
    has_count: bool,
    gap: f64,
    correct: usize,
    frames: usize,
}

impl EpochSums {
    fn absorb(&mut self, g: &Graph, logits: Var, parts: &SegLossParts, labels: &[Label]) -> Result<()> {
        self.members += 1;
        self.loss += g.value(parts.total).item();
        self.frame += g.value(parts.frame).item();
        if let Some(c) = parts.count {
            self.count += g.value(c).item();
            self.has_count = true;
        }
        let logits = g.value(logits);
        self.gap += hard_boundary_count_gap(logits, labels)?;
        let (c, t) = frame_hits(logits, labels)?;
        self.correct += c;
        self.frames += t;
        Ok(())
    }

    fn record(&self, epoch: usize, val_mf1b: Option<f64>) -> EpochRecord {
        let n = self.members.max(1) as f64;
        EpochRecord {
            epoch,
            loss: self.loss / n,
            frame_loss: Some(self.frame / n),
            boundary_loss: self.has_count.then(|| self.count / n),
            count_gap: Some(self.gap / n),
            train_acc: (self.frames > 0).then(|| self.correct as f64 / self.frames as f64),
            val_mf1b,
            val_top1: None,
            best: false,
        }
    }
}

/// Mean boundary F1 of argmax predictions over the given items.
fn eval_mf1b_with<F>(
    items: &[SegItem],
    idx: &[usize],
    thresholds: &[usize],
    mut logits_for: F,
) -> Result<f64>
where
    F: FnMut(usize) -> Result<Tensor>,
{
    let mut pred = Vec::with_capacity(idx.len());
    let mut gt = Vec::with_capacity(idx.len());
    for &i in idx {
        let labels = predicted_labels(&logits_for(i)?)?;
        pred.push(boundary_frames(&labels));
        gt.push(boundary_frames(&items[i].labels));
    }
    mf1b(&pred, &gt, thresholds, Averaging::PerSequence)
}

/// Higher-is-better selection against the previous best; falls back to
/// lower-is-better training loss when there is no validation metric.
pub(crate) fn improved(best: Option<f64>, val_metric: Option<f64>, train_loss: f64) -> bool {
    match (best, val_metric) {
        (None, _) => true,
        (Some(prev), Some(v)) => v > prev,
        (Some(prev), None) => train_loss < prev,
    }
}

/// Train the segmentation network from scratch on labeled pose sequences.
pub fn train_stage1(
    net: &SegmentationNetwork,
    seqs: &[PoseSequence],
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    boundary_thresholds: &[usize],
) -> Result<StageOutcome> {
    tcfg.validate()?;
    lcfg.validate()?;
    if boundary_thresholds.is_empty() {
        return Err(Error::config("no boundary thresholds for checkpoint selection"));
    }
    let items = prepare_seg_items(seqs, tcfg.t_max, tcfg.augment_flip, false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut store = ParamStore::new();
    net.init_params(&mut store, &mut rng)?;
    store.set_meta("stage", "1");
    let (train_idx, val_idx) = split_indices(items.len(), tcfg.val_fraction, &mut rng);
    let mut adam = Adam::new(tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.eps)?;
    let mut log = Vec::with_capacity(tcfg.epochs);
    let mut best: Option<(ParamStore, usize, f64)> = None;
    let mut order = train_idx;

    for epoch in 1..=tcfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = EpochSums::default();
        for batch in order.chunks(tcfg.batch_size) {
            let mut accum = GradAccum::new();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let item = &items[i];
                let mirrored = tcfg.augment_flip && rng.random::<f64>() < 0.5;
                let mut g = Graph::new();
                let mut bind = Bind::new(&store, true);
                let x = g.leaf(item.features(mirrored).clone(), false);
                let logits = net.forward(&mut g, &mut bind, x)?;
                let parts = seg_loss_parts(&mut g, logits, &item.labels, lcfg)?;
                g.backward(parts.total)?;
                accum.add(&g, &bind.bound, scale)?;
                let hooks = bind.bn_stats;
                apply_bn_updates(&mut store, &g, &hooks)?;
                sums.absorb(&g, logits, &parts, &item.labels)?;
            }
            adam.step(&mut store, &accum.into_grads())?;
        }

        let val_mf1b = if val_idx.is_empty() {
            None
        } else {
            Some(eval_mf1b_with(&items, &val_idx, boundary_thresholds, |i| {
                let mut g = Graph::new();
                let mut bind = Bind::new(&store, false);
                let x = g.leaf(items[i].features.clone(), false);
                let logits = net.forward(&mut g, &mut bind, x)?;
                Ok(g.value(logits).clone())
            })?)
        };
        let mut record = sums.record(epoch, val_mf1b);
        if improved(best.as_ref().map(|(_, _, m)| *m), val_mf1b, record.loss) {
            let mut snap = store.clone();
            snap.set_meta("best_epoch", &epoch.to_string());
            best = Some((snap, epoch, val_mf1b.unwrap_or(record.loss)));
            record.best = true;
        }
        log.push(record);
    }

    let (store, best_epoch, best_metric) = best.expect("at least one epoch ran");
    Ok(StageOutcome { store, log, best_epoch, best_metric })
}

fn stack_hand_batch(
    dataset: &HandshapeDataset,
    idx: &[usize],
    joints: usize,
) -> Result<(Tensor, Vec<usize>)> {
    let width = joints * 2;
    let mut data = Vec::with_capacity(idx.len() * width);
    let mut classes = Vec::with_capacity(idx.len());
    for &i in idx {
        let sample = &dataset.samples[i];
        if sample.points.len() != width {
            return Err(Error::data(format!(
                "handshape sample {} has {} coordinates, expected {}",
                i,
                sample.points.len(),
                width
            )));
        }
        data.extend_from_slice(&sample.points);
        classes.push(sample.class);
    }
    Ok((Tensor::new(vec![idx.len(), joints, 2], data)?, classes))
}

fn hand_top1(
    net: &HandshapeNetwork,
    store: &ParamStore,
    dataset: &HandshapeDataset,
    idx: &[usize],
) -> Result<f64> {
    let (x, classes) = stack_hand_batch(dataset, idx, net.joints())?;
    let mut g = Graph::new();
    let mut bind = Bind::new(store, false);
    let xv = g.leaf(x, false);
    let out = net.forward(&mut g, &mut bind, xv)?;
    let pred = argmax_rows(g.value(out.logits));
    let correct = pred.iter().zip(&classes).filter(|(p, c)| p == c).count();
    Ok(correct as f64 / classes.len() as f64)
}

/// Train the handshape classifier from scratch on labeled hand frames.
pub fn train_stage2(
    net: &HandshapeNetwork,
    dataset: &HandshapeDataset,
    tcfg: &TrainConfig,
) -> Result<StageOutcome> {
    tcfg.validate()?;
    if dataset.classes != net.cfg.num_classes {
        return Err(Error::config(format!(
            "dataset has {} classes but the network expects {}",
            dataset.classes, net.cfg.num_classes
        )));
    }
    if dataset.samples.is_empty() {
        return Err(Error::data("no handshape samples"));
    }
    if let Some(bad) = dataset.samples.iter().position(|s| s.class >= dataset.classes) {
        return Err(Error::data(format!(
            "handshape sample {} names class {} outside 0..{}",
            bad, dataset.samples[bad].class, dataset.classes
        )));
    }
    let distinct: BTreeSet<usize> = dataset.samples.iter().map(|s| s.class).collect();
    if distinct.len() < 2 {
        return Err(Error::data(format!(
            "handshape training needs at least 2 distinct classes, got {}",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut store = ParamStore::new();
    net.init_params(&mut store, &mut rng)?;
    store.set_meta("stage", "2");
    let (train_idx, val_idx) = split_indices(dataset.samples.len(), tcfg.val_fraction, &mut rng);
    let mut adam = Adam::new(tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.eps)?;
    let mut log = Vec::with_capacity(tcfg.epochs);
    let mut best: Option<(ParamStore, usize, f64)> = None;
    let mut order = train_idx;

    for epoch in 1..=tcfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for batch in order.chunks(tcfg.batch_size) {
            let (x, classes) = stack_hand_batch(dataset, batch, net.joints())?;
            let mut g = Graph::new();
            let mut bind = Bind::new(&store, true);
            let xv = g.leaf(x, false);
            let out = net.forward(&mut g, &mut bind, xv)?;
            let loss = handshape_loss(&mut g, out.logits, &classes)?;
            g.backward(loss)?;
            let mut accum = GradAccum::new();
            accum.add(&g, &bind.bound, 1.0)?;
            adam.step(&mut store, &accum.into_grads())?;
            loss_sum += g.value(loss).item();
            steps += 1;
            let pred = argmax_rows(g.value(out.logits));
            correct += pred.iter().zip(&classes).filter(|(p, c)| p == c).count();
            seen += classes.len();
        }

        let val_top1 = if val_idx.is_empty() {
            None
        } else {
            Some(hand_top1(net, &store, dataset, &val_idx)?)
        };
        let loss = loss_sum / steps.max(1) as f64;
        let mut record = EpochRecord {
            epoch,
            loss,
            frame_loss: None,
            boundary_loss: None,
            count_gap: None,
            train_acc: (seen > 0).then(|| correct as f64 / seen as f64),
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

/// Frozen-network forward of the hand stream: 256-d features per frame.
fn hand_stream(net: &HandshapeNetwork, store: &ParamStore, hand: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let mut bind = Bind::new(store, false);
    let x = g.leaf(hand.clone(), false);
    let out = net.forward(&mut g, &mut bind, x)?;
    Ok(g.value(out.features).clone())
}

/// Frozen-backbone forward: pooled per-frame features with running batch
/// statistics.
fn backbone_features(net: &SegmentationNetwork, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let mut bind = Bind::new(store, false);
    let xv = g.leaf(x.clone(), false);
    let pooled = net.backbone(&mut g, &mut bind, xv)?;
    Ok(g.value(pooled).clone())
}

/// Train the fusion module on top of finished segmentation and handshape
/// checkpoints. The handshape network stays frozen (verified by digest);
/// the segmentation backbone stays frozen too unless
/// [`TrainConfig::unfreeze_backbone`] is set, in which case it trains with
/// live batch statistics.
pub fn train_stage3(
    seg_net: &SegmentationNetwork,
    hand_net: &HandshapeNetwork,
    fusion: &FusionModule,
    seqs: &[PoseSequence],
    stage1: &ParamStore,
    stage2: &ParamStore,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    boundary_thresholds: &[usize],
) -> Result<StageOutcome> {
    tcfg.validate()?;
    lcfg.validate()?;
    if boundary_thresholds.is_empty() {
        return Err(Error::config("no boundary thresholds for checkpoint selection"));
    }
    for (store, want, what) in [(stage1, "1", "segmentation"), (stage2, "2", "handshape")] {
        let got = store.meta("stage");
        if got != Some(want) {
            return Err(Error::Prerequisite(format!(
                "fusion training needs a finished {} checkpoint (stage {}), got stage {}",
                what,
                want,
                got.unwrap_or("none")
            )));
        }
    }
    if fusion.cfg.dim != seg_net.cfg.feature_dim() || fusion.cfg.dim != hand_net.cfg.feature_dim() {
        return Err(Error::config(format!(
            "fusion width {} must match segmentation features {} and handshape features {}",
            fusion.cfg.dim,
            seg_net.cfg.feature_dim(),
            hand_net.cfg.feature_dim()
        )));
    }

    let items = prepare_seg_items(seqs, tcfg.t_max, tcfg.augment_flip, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut store = ParamStore::new();
    for (name, tensor, trainable) in stage1.iter() {
        if name.starts_with("seg.") {
            let keep = if name.contains(".head.") {
                trainable
            } else {
                trainable && tcfg.unfreeze_backbone
            };
            store.insert(name, tensor.clone(), keep)?;
        }
    }
    for (name, tensor, _) in stage2.iter() {
        if name.starts_with("hand.") {
            store.insert(name, tensor.clone(), false)?;
        }
    }
    fusion.init_params(&mut store, &mut rng)?;
    store.set_meta("stage", "3");
    let hand_digest = params_digest(&store, "hand.");

    let frozen = !tcfg.unfreeze_backbone;
    // the hand network never trains here, so its features are fixed;
    // a frozen backbone's pooled features are fixed too
    let mut hand_cache: Vec<(Tensor, Option<Tensor>)> = Vec::with_capacity(items.len());
    for item in &items {
        let hand = item.hand.as_ref().expect("prepared with hands");
        let base = hand_stream(hand_net, &store, hand)?;
        let flip = match &item.flip_hand {
            Some(h) => Some(hand_stream(hand_net, &store, h)?),
            None => None,
        };
        hand_cache.push((base, flip));
    }
    let seg_cache: Option<Vec<(Tensor, Option<Tensor>)>> = if frozen {
        let mut cache = Vec::with_capacity(items.len());
        for item in &items {
            let base = backbone_features(seg_net, &store, &item.features)?;
            let flip = match &item.flip_features {
                Some(f) => Some(backbone_features(seg_net, &store, f)?),
                None => None,
            };
            cache.push((base, flip));
        }
        Some(cache)
    } else {
        None
    };

    let (train_idx, val_idx) = split_indices(items.len(), tcfg.val_fraction, &mut rng);
    let mut adam = Adam::new(tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.eps)?;
    let mut log = Vec::with_capacity(tcfg.epochs);
    let mut best: Option<(ParamStore, usize, f64)> = None;
    let mut order = train_idx;

    for epoch in 1..=tcfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = EpochSums::default();
        for batch in order.chunks(tcfg.batch_size) {
            let mut accum = GradAccum::new();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let item = &items[i];
                let mirrored = tcfg.augment_flip && rng.random::<f64>() < 0.5;
                let mut g = Graph::new();
                let mut bind = Bind::new(&store, !frozen);
                let x_seg = match &seg_cache {
                    Some(cache) => {
                        let feats = if mirrored {
                            cache[i].1.as_ref().expect("mirrored cache prepared")
                        } else {
                            &cache[i].0
                        };
                        g.leaf(feats.clone(), false)
                    }
                    None => {
                        let x = g.leaf(item.features(mirrored).clone(), false);
                        seg_net.backbone(&mut g, &mut bind, x)?
                    }
                };
                let hand_feats = if mirrored {
                    hand_cache[i].1.as_ref().expect("mirrored hand cache prepared")
                } else {
                    &hand_cache[i].0
                };
                let x_hand = g.leaf(hand_feats.clone(), false);
                let fused = fusion.forward(
                    &mut g,
                    &mut bind,
                    x_seg,
                    x_hand,
                    &item.frame_valid,
                    GateMode::Learned,
                )?;
                let logits = seg_net.head(&mut g, &mut bind, fused)?;
                let parts = seg_loss_parts(&mut g, logits, &item.labels, lcfg)?;
                g.backward(parts.total)?;
                accum.add(&g, &bind.bound, scale)?;
                let hooks = bind.bn_stats;
                apply_bn_updates(&mut store, &g, &hooks)?;
                sums.absorb(&g, logits, &parts, &item.labels)?;
            }
            adam.step(&mut store, &accum.into_grads())?;
        }

        let val_mf1b = if val_idx.is_empty() {
            None
        } else {
            Some(eval_mf1b_with(&items, &val_idx, boundary_thresholds, |i| {
                let mut g = Graph::new();
                let mut bind = Bind::new(&store, false);
                let x_seg = match &seg_cache {
                    Some(cache) => g.leaf(cache[i].0.clone(), false),
                    None => {
                        let x = g.leaf(items[i].features.clone(), false);
                        seg_net.backbone(&mut g, &mut bind, x)?
                    }
                };
                let x_hand = g.leaf(hand_cache[i].0.clone(), false);
                let fused = fusion.forward(
                    &mut g,
                    &mut bind,
                    x_seg,
                    x_hand,
                    &items[i].frame_valid,
                    GateMode::Learned,
                )?;
                let logits = seg_net.head(&mut g, &mut bind, fused)?;
                Ok(g.value(logits).clone())
            })?)
        };
        let mut record = sums.record(epoch, val_mf1b);
        if improved(best.as_ref().map(|(_, _, m)| *m), val_mf1b, record.loss) {
            let mut snap = store.clone();
            snap.set_meta("best_epoch", &epoch.to_string());
            best = Some((snap, epoch, val_mf1b.unwrap_or(record.loss)));
            record.best = true;
        }
        log.push(record);
    }

    let (best_store, best_epoch, best_metric) = best.expect("at least one epoch ran");
    for checked in [&store, &best_store] {
        if params_digest(checked, "hand.") != hand_digest {
            return Err(Error::data(
                "handshape parameters changed during fusion training",
            ));
        }
    }
    Ok(StageOutcome { store: best_store, log, best_epoch, best_metric })
}

/// Label every frame of one sequence with a trained checkpoint. A store
/// holding fusion parameters runs the fused network, otherwise the
/// segmentation network alone. The sequence keeps its natural length.
pub fn infer_labels(
    seg_net: &SegmentationNetwork,
    hand_net: &HandshapeNetwork,
    fusion: &FusionModule,
    store: &ParamStore,
    seq: &PoseSequence,
) -> Result<Vec<Label>> {
    let mut s = seq.clone();
    s.assert_finite()?;
    s.normalize();
    let features = s.kinematic_features()?;
    let mut g = Graph::new();
    let mut bind = Bind::new(store, false);
    let x = g.leaf(features, false);
    let logits = if store.contains("fusion.gate") {
        let pooled = seg_net.backbone(&mut g, &mut bind, x)?;
        let hand = hand_features(&extract_dominant_hand(&s)?)?;
        let xh = g.leaf(hand, false);
        let out = hand_net.forward(&mut g, &mut bind, xh)?;
        let valid = vec![true; s.frames()];
        let fused = fusion.forward(&mut g, &mut bind, pooled, out.features, &valid, GateMode::Learned)?;
        seg_net.head(&mut g, &mut bind, fused)?
    } else {
        seg_net.forward(&mut g, &mut bind, x)?
    };
    predicted_labels(g.value(logits))
}
