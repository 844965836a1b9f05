//! Network definitions: segmentation backbone, handshape recognizer, and
//! the gated cross-attention that joins them.
//!
//! Models own no tensors. Parameters live in a [`ParamStore`] under dotted
//! names (`seg.`, `hand.`, `fusion.`); a forward pass binds them into the
//! graph as leaves, so freezing a subnetwork is just clearing its trainable
//! flags. Batch-norm running statistics are store entries too: train-mode
//! forwards report the batch statistics they used and the trainer folds them
//! into the running entries afterwards, keeping forward passes free of side
//! effects.

mod fusion;
mod handshape;
mod stgcn;

pub use fusion::{FusionConfig, FusionModule};
pub use handshape::{HandshapeConfig, HandshapeForward, HandshapeNetwork};
pub use stgcn::{SegmentationConfig, SegmentationNetwork};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{BnMode, Graph, ParamStore, Tensor, Var};

/// A parameter leaf created during one forward pass.
#[derive(Debug, Clone)]
pub struct BoundParam {
    pub name: String,
    pub var: Var,
    pub trainable: bool,
}

/// A train-mode batch-norm node whose statistics should update the named
/// running entries after the step.
#[derive(Debug, Clone)]
pub struct BnStatHook {
    pub mean_name: String,
    pub var_name: String,
    pub node: Var,
}

/// Binds store parameters into a graph and records what a forward touched.
pub struct Bind<'s> {
    store: &'s ParamStore,
    train_bn: bool,
    pub bound: Vec<BoundParam>,
    pub bn_stats: Vec<BnStatHook>,
}

impl<'s> Bind<'s> {
    /// `train_bn` selects batch statistics (and stat hooks) over running
    /// statistics.
    pub fn new(store: &'s ParamStore, train_bn: bool) -> Self {
        Bind {
            store,
            train_bn,
            bound: Vec::new(),
            bn_stats: Vec::new(),
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    /// Bind a named tensor as a graph leaf. Gradients flow only when the
    /// store marks it trainable.
    pub fn var(&mut self, g: &mut Graph, name: &str) -> Result<Var> {
        let tensor = self
            .store
            .get(name)
            .ok_or_else(|| Error::config(format!("missing parameter {:?}", name)))?;
        let trainable = self.store.is_trainable(name).unwrap_or(false);
        let var = g.leaf(tensor.clone(), trainable);
        self.bound.push(BoundParam {
            name: name.to_string(),
            var,
            trainable,
        });
        Ok(var)
    }

    /// Batch norm over `axis` using `<prefix>.gamma/.beta` and, in eval
    /// mode, `<prefix>.running_mean/.running_var`.
    pub fn batch_norm(&mut self, g: &mut Graph, x: Var, prefix: &str, axis: usize) -> Result<Var> {
        let gamma = self.var(g, &format!("{}.gamma", prefix))?;
        let beta = self.var(g, &format!("{}.beta", prefix))?;
        let mean_name = format!("{}.running_mean", prefix);
        let var_name = format!("{}.running_var", prefix);
        if self.train_bn {
            let node = g.batch_norm(x, gamma, beta, axis, BnMode::Train)?;
            self.bn_stats.push(BnStatHook {
                mean_name,
                var_name,
                node,
            });
            Ok(node)
        } else {
            let mean = self
                .store
                .get(&mean_name)
                .ok_or_else(|| Error::config(format!("missing parameter {:?}", mean_name)))?
                .data()
                .to_vec();
            let var = self
                .store
                .get(&var_name)
                .ok_or_else(|| Error::config(format!("missing parameter {:?}", var_name)))?
                .data()
                .to_vec();
            g.batch_norm(x, gamma, beta, axis, BnMode::Eval { mean, var })
        }
    }
}

/// Uniform fan-in initialization: every element in `[-1/sqrt(fan_in),
/// 1/sqrt(fan_in)]`, drawn in flat order.
pub(crate) fn uniform_init(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
        .collect();
    Tensor::new(shape, data).expect("element count matches shape")
}

/// Insert `<prefix>.gamma/.beta/.running_mean/.running_var` for `channels`.
pub(crate) fn init_bn(store: &mut ParamStore, prefix: &str, channels: usize) -> Result<()> {
    store.insert(
        &format!("{}.gamma", prefix),
        Tensor::full(&[channels], 1.0),
        true,
    )?;
    store.insert(
        &format!("{}.beta", prefix),
        Tensor::zeros(&[channels]),
        true,
    )?;
    store.insert(
        &format!("{}.running_mean", prefix),
        Tensor::zeros(&[channels]),
        false,
    )?;
    store.insert(
        &format!("{}.running_var", prefix),
        Tensor::full(&[channels], 1.0),
        false,
    )?;
    Ok(())
}

/// Apply recorded batch statistics to their running entries:
/// `running = momentum * running + (1 - momentum) * batch`.
pub const BN_MOMENTUM: f64 = 0.9;

pub fn apply_bn_updates(store: &mut ParamStore, graph: &Graph, hooks: &[BnStatHook]) -> Result<()> {
    for hook in hooks {
        let (mean, var) = graph
            .bn_batch_stats(hook.node)
            .ok_or_else(|| Error::config("stat hook on a non-batch-norm node"))?;
        let (mean, var) = (mean.to_vec(), var.to_vec());
        for (name, batch) in [(&hook.mean_name, mean), (&hook.var_name, var)] {
            let slot = store
                .get_mut(name)
                .ok_or_else(|| Error::config(format!("missing parameter {:?}", name)))?;
            for (r, b) in slot.data_mut().iter_mut().zip(batch) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b;
            }
        }
    }
    Ok(())
}
