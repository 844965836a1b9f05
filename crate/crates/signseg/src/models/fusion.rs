//! Gated cross-attention from segmentation frames onto handshape frames.
//!
//! Queries come from the pooled segmentation features; keys and values come
//! from both feature streams stacked along time, so a frame can attend to
//! its own motion context and to handshape evidence anywhere in the clip.
//! The attended mix enters through a residual whose scalar gate starts at
//! sigmoid(-4), keeping the fused network near-identical to the plain
//! backbone at the start of fusion training. Forcing the gate to zero takes
//! the identity path exactly, bit for bit.

use rand_chacha::ChaCha8Rng;

use super::{uniform_init, Bind};
use crate::error::{Error, Result};
use crate::tensor::{GateMode, Graph, ParamStore, Tensor, Var};

/// Initial gate pre-activation; sigmoid(-4) is about 0.018.
pub const GATE_INIT: f64 = -4.0;

#[derive(Debug, Clone)]
pub struct FusionConfig {
    /// Shared width of both feature streams.
    pub dim: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { dim: 256 }
    }
}

pub struct FusionModule {
    pub cfg: FusionConfig,
}

impl FusionModule {
    pub fn new(cfg: FusionConfig) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::config("fusion wants a nonzero feature width"));
        }
        Ok(FusionModule { cfg })
    }

    /// Create all `fusion.*` parameters in fixed order.
    pub fn init_params(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        let d = self.cfg.dim;
        for name in ["fusion.wq", "fusion.wk", "fusion.wv"] {
            store.insert(name, uniform_init(rng, vec![d, d], d), true)?;
        }
        store.insert("fusion.gate", Tensor::new(vec![1, 1], vec![GATE_INIT])?, true)?;
        Ok(())
    }

    /// Fuse `x_seg: [t, dim]` with `x_hand: [t, dim]`. `frame_valid` marks
    /// real (non-padding) frames; attention weight on a padded frame's key
    /// is exactly zero. `GateMode::ForcedZero` returns `x_seg` unchanged.
    pub fn forward(
        &self,
        g: &mut Graph,
        bind: &mut Bind,
        x_seg: Var,
        x_hand: Var,
        frame_valid: &[bool],
        gate_mode: GateMode,
    ) -> Result<Var> {
        let d = self.cfg.dim;
        let s_seg = g.value(x_seg).shape().to_vec();
        let s_hand = g.value(x_hand).shape().to_vec();
        if s_seg.len() != 2 || s_seg[1] != d || s_hand != s_seg {
            return Err(Error::shape(format!(
                "fusion wants matching [t, {}] streams, got {:?} and {:?}",
                d, s_seg, s_hand
            )));
        }
        let t = s_seg[0];
        if frame_valid.len() != t {
            return Err(Error::shape(format!(
                "fusion wants {} frame validity flags, got {}",
                t,
                frame_valid.len()
            )));
        }
        if let GateMode::ForcedZero = gate_mode {
            return Ok(x_seg);
        }

        let wq = bind.var(g, "fusion.wq")?;
        let wk = bind.var(g, "fusion.wk")?;
        let wv = bind.var(g, "fusion.wv")?;
        let gate = bind.var(g, "fusion.gate")?;

        let q = g.matmul(x_seg, wq)?;
        let k_seg = g.matmul(x_seg, wk)?;
        let k_hand = g.matmul(x_hand, wk)?;
        let keys = g.concat0(k_seg, k_hand)?;
        let v_seg = g.matmul(x_seg, wv)?;
        let v_hand = g.matmul(x_hand, wv)?;
        let values = g.concat0(v_seg, v_hand)?;

        let scores = g.matmul_nt(q, keys)?;
        let scaled = g.scale(scores, 1.0 / (d as f64).sqrt())?;
        // both stacked halves follow the same frame validity
        let mut valid = Vec::with_capacity(2 * t);
        valid.extend_from_slice(frame_valid);
        valid.extend_from_slice(frame_valid);
        let probs = g.masked_softmax_rows(scaled, &valid)?;
        let attended = g.matmul(probs, values)?;

        let gate_act = g.sigmoid(gate)?;
        let gated = g.mul(attended, gate_act)?;
        g.add(x_seg, gated)
    }
}
