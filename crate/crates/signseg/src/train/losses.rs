//! Segmentation and handshape training losses.
//!
//! The segmentation loss combines a class-weighted frame cross-entropy with
//! a count term: the absolute gap between the soft number of predicted
//! boundaries (sum of boundary probabilities over real frames) and the true
//! count. The soft count keeps the gap differentiable while agreeing with
//! the hard count once predictions are one-hot.

use crate::data::Label;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone)]
pub struct LossConfig {
    /// Per-class frame weights, indexed like [`Label::index`]: padding,
    /// transition, interior, boundary.
    pub class_weights: [f64; 4],
    /// Weight of the boundary-count term.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { class_weights: [0.1, 1.0, 1.0, 5.0], lambda: 0.1 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("class weights must be finite and nonnegative"));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::config("lambda must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Class-weighted frame cross-entropy over `[t, 4]` logits.
pub fn frame_loss(g: &mut Graph, logits: Var, labels: &[Label], cfg: &LossConfig) -> Result<Var> {
    cfg.validate()?;
    let targets: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    g.cross_entropy(logits, &targets, &cfg.class_weights)
}

/// |soft boundary count - true boundary count| for one sequence. The soft
/// count sums the boundary-class probability over non-padding frames.
pub fn boundary_count_loss(g: &mut Graph, probs: Var, labels: &[Label]) -> Result<Var> {
    let shape = g.value(probs).shape().to_vec();
    if shape.len() != 2 || shape[1] != Label::COUNT || shape[0] != labels.len() {
        return Err(Error::shape(format!(
            "boundary count wants [{}, {}] probabilities, got {:?}",
            labels.len(),
            Label::COUNT,
            shape
        )));
    }
    let t = labels.len();
    let mut selector = Tensor::zeros(&[Label::COUNT, 1]);
    selector.data_mut()[Label::Boundary.index()] = 1.0;
    let sel = g.constant(selector);
    let b_col = g.matmul(probs, sel)?;
    let mask = Tensor::from_fn(&[t, 1], |i| if labels[i] == Label::Padding { 0.0 } else { 1.0 });
    let mask = g.constant(mask);
    let masked = g.mul(b_col, mask)?;
    let soft = g.sum_all(masked)?;
    let truth = labels.iter().filter(|&&l| l == Label::Boundary).count();
    let target = g.constant(Tensor::scalar(truth as f64));
    let gap = g.sub(soft, target)?;
    g.abs(gap)
}

/// The segmentation loss and its two ingredients, kept separate so the
/// trainer can log them.
#[derive(Debug, Clone, Copy)]
pub struct SegLossParts {
    pub total: Var,
    pub frame: Var,
    /// Unweighted count term; absent when `lambda` is zero.
    pub count: Option<Var>,
}

/// Per-sequence segmentation loss: frame term plus `lambda` times the
/// boundary-count term.
pub fn seg_loss_parts(
    g: &mut Graph,
    logits: Var,
    labels: &[Label],
    cfg: &LossConfig,
) -> Result<SegLossParts> {
    let frame = frame_loss(g, logits, labels, cfg)?;
    if cfg.lambda == 0.0 {
        return Ok(SegLossParts { total: frame, frame, count: None });
    }
    let probs = g.softmax(logits, 1)?;
    let count = boundary_count_loss(g, probs, labels)?;
    let weighted = g.scale(count, cfg.lambda)?;
    let total = g.add(frame, weighted)?;
    Ok(SegLossParts { total, frame, count: Some(count) })
}

/// [`seg_loss_parts`] reduced to the combined value.
pub fn seg_loss(g: &mut Graph, logits: Var, labels: &[Label], cfg: &LossConfig) -> Result<Var> {
    Ok(seg_loss_parts(g, logits, labels, cfg)?.total)
}

/// Plain cross-entropy for handshape classification over `[n, classes]`
/// logits.
pub fn handshape_loss(g: &mut Graph, logits: Var, classes: &[usize]) -> Result<Var> {
    let shape = g.value(logits).shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::shape(format!("handshape loss wants [n, c] logits, got {:?}", shape)));
    }
    let weights = vec![1.0; shape[1]];
    g.cross_entropy(logits, classes, &weights)
}

/// Monitoring companion to the soft count: |argmax boundary count - true|
/// over non-padding frames.
pub fn hard_boundary_count_gap(logits: &Tensor, labels: &[Label]) -> Result<f64> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[1] != Label::COUNT || shape[0] != labels.len() {
        return Err(Error::shape(format!(
            "count gap wants [{}, {}] logits, got {:?}",
            labels.len(),
            Label::COUNT,
            shape
        )));
    }
    let mut predicted = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        if label == Label::Padding {
            continue;
        }
        let row = &logits.data()[i * Label::COUNT..(i + 1) * Label::COUNT];
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
            .map(|(j, _)| j)
            .expect("nonempty row");
        if argmax == Label::Boundary.index() {
            predicted += 1;
        }
    }
    let truth = labels.iter().filter(|&&l| l == Label::Boundary).count();
    Ok(predicted.abs_diff(truth) as f64)
}
