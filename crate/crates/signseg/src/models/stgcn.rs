//! Frame-labeling backbone: stacked spatio-temporal graph blocks over the
//! body skeleton, a joint pooling step, and a temporal head that emits one
//! 4-class logit row per frame.
//!
//! Each block aggregates joints through the normalized adjacency, mixes
//! channels, normalizes, rectifies, then convolves along time with a shared
//! per-joint kernel; a residual path (1x1-projected when the width changes)
//! keeps early blocks trainable at depth ten. The head runs after joints are
//! averaged away, so a fusion step can splice enriched frame features in
//! between backbone and head.

use rand_chacha::ChaCha8Rng;

use super::{init_bn, uniform_init, Bind};
use crate::error::{Error, Result};
use crate::graphs::JointGraph;
use crate::tensor::{Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone)]
pub struct SegmentationConfig {
    pub in_channels: usize,
    pub block_channels: Vec<usize>,
    pub temporal_kernel: usize,
    pub head_kernel: usize,
    pub num_classes: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            in_channels: 6,
            block_channels: vec![64, 64, 64, 64, 128, 128, 128, 256, 256, 256],
            temporal_kernel: 9,
            head_kernel: 9,
            num_classes: 4,
        }
    }
}

impl SegmentationConfig {
    pub fn feature_dim(&self) -> usize {
        *self.block_channels.last().expect("at least one block")
    }

    fn validate(&self) -> Result<()> {
        if self.block_channels.is_empty() {
            return Err(Error::config("segmentation network wants at least one block"));
        }
        if self.temporal_kernel % 2 == 0 || self.head_kernel % 2 == 0 {
            return Err(Error::config("temporal kernels must be odd"));
        }
        if self.in_channels == 0 || self.num_classes == 0 {
            return Err(Error::config("zero-sized channel or class count"));
        }
        Ok(())
    }
}

pub struct SegmentationNetwork {
    pub cfg: SegmentationConfig,
    graph: JointGraph,
}

impl SegmentationNetwork {
    pub fn new(cfg: SegmentationConfig, graph: JointGraph) -> Result<Self> {
        cfg.validate()?;
        Ok(SegmentationNetwork { cfg, graph })
    }

    pub fn joints(&self) -> usize {
        self.graph.num_joints()
    }

    /// Create all `seg.*` parameters in fixed order.
    pub fn init_params(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        let k = self.cfg.temporal_kernel;
        let mut c_in = self.cfg.in_channels;
        for (b, &c_out) in self.cfg.block_channels.iter().enumerate() {
            store.insert(
                &format!("seg.block{}.gcn.w", b),
                uniform_init(rng, vec![c_in, c_out], c_in),
                true,
            )?;
            init_bn(store, &format!("seg.block{}.bn", b), c_out)?;
            store.insert(
                &format!("seg.block{}.tconv.w", b),
                uniform_init(rng, vec![c_out, c_out, k], c_out * k),
                true,
            )?;
            if c_in != c_out {
                store.insert(
                    &format!("seg.block{}.res.w", b),
                    uniform_init(rng, vec![c_in, c_out], c_in),
                    true,
                )?;
            }
            c_in = c_out;
        }
        let c = self.cfg.feature_dim();
        let hk = self.cfg.head_kernel;
        store.insert(
            "seg.head.tconv1.w",
            uniform_init(rng, vec![c, c, hk], c * hk),
            true,
        )?;
        store.insert(
            "seg.head.tconv2.w",
            uniform_init(rng, vec![c, c, hk], c * hk),
            true,
        )?;
        // zero-initialized classifier: uniform logits at step zero
        store.insert(
            "seg.head.out.w",
            Tensor::zeros(&[c, self.cfg.num_classes]),
            true,
        )?;
        store.insert(
            "seg.head.out.b",
            Tensor::zeros(&[1, self.cfg.num_classes]),
            true,
        )?;
        Ok(())
    }

    /// Blocks plus joint pooling: `[t, joints, in_channels]` to
    /// `[t, feature_dim]`.
    pub fn backbone(&self, g: &mut Graph, bind: &mut Bind, x: Var) -> Result<Var> {
        let shape = g.value(x).shape().to_vec();
        if shape.len() != 3 || shape[1] != self.graph.num_joints() || shape[2] != self.cfg.in_channels
        {
            return Err(Error::shape(format!(
                "backbone wants [t, {}, {}], got {:?}",
                self.graph.num_joints(),
                self.cfg.in_channels,
                shape
            )));
        }
        let mut h = x;
        let mut c_in = self.cfg.in_channels;
        for (b, &c_out) in self.cfg.block_channels.iter().enumerate() {
            let w = bind.var(g, &format!("seg.block{}.gcn.w", b))?;
            let agg = g.frame_adj(self.graph.a_hat(), h)?;
            let mixed = g.matmul(agg, w)?;
            let normed = bind.batch_norm(g, mixed, &format!("seg.block{}.bn", b), 2)?;
            let act = g.relu(normed)?;
            let wt = bind.var(g, &format!("seg.block{}.tconv.w", b))?;
            let conv = g.temporal_conv_tjc(act, wt)?;
            let res = if c_in == c_out {
                h
            } else {
                let wr = bind.var(g, &format!("seg.block{}.res.w", b))?;
                g.matmul(h, wr)?
            };
            h = g.add(conv, res)?;
            c_in = c_out;
        }
        // average joints away
        g.reduce_mean(h, 1)
    }

    /// Temporal head: `[t, feature_dim]` to `[t, num_classes]` logits.
    pub fn head(&self, g: &mut Graph, bind: &mut Bind, pooled: Var) -> Result<Var> {
        let shape = g.value(pooled).shape().to_vec();
        let c = self.cfg.feature_dim();
        if shape.len() != 2 || shape[1] != c {
            return Err(Error::shape(format!(
                "head wants [t, {}], got {:?}",
                c, shape
            )));
        }
        let t = shape[0];
        let mut h = g.reshape(pooled, &[t, 1, c])?;
        for name in ["seg.head.tconv1.w", "seg.head.tconv2.w"] {
            let w = bind.var(g, name)?;
            let conv = g.temporal_conv_tjc(h, w)?;
            h = g.relu(conv)?;
        }
        let flat = g.reshape(h, &[t, c])?;
        let w = bind.var(g, "seg.head.out.w")?;
        let b = bind.var(g, "seg.head.out.b")?;
        let proj = g.matmul(flat, w)?;
        g.add(proj, b)
    }

    /// Backbone and head in one go (the unfused path).
    pub fn forward(&self, g: &mut Graph, bind: &mut Bind, x: Var) -> Result<Var> {
        let pooled = self.backbone(g, bind, x)?;
        self.head(g, bind, pooled)
    }
}
