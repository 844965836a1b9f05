//! Reverse-mode differentiation over an explicit operation record.
//!
//! A [`Graph`] owns every tensor produced during a forward pass. Operations
//! execute eagerly and append a node describing their inputs; [`Graph::backward`]
//! walks the record in reverse creation order, visiting each node exactly once
//! and accumulating vector-Jacobian products into the `grad` slot of every
//! node that requires gradients. Calling `backward` again accumulates on top,
//! so two passes double every gradient.

use super::kernels as k;
use super::{broadcast_shape, strides_of, Tensor};
use crate::error::{Error, Result};

/// Batch-norm epsilon. Pinned; checkpoints do not carry it.
pub const BN_EPS: f64 = 1e-5;

/// Handle to a node inside a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Elem {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReduceKind {
    Sum,
    Mean,
}

/// How a batch-norm node sources its statistics.
#[derive(Debug, Clone)]
pub enum BnMode {
    /// Normalize with statistics of this input. The computed statistics are
    /// kept on the node (see [`Graph::bn_batch_stats`]); the caller owns any
    /// running-average update.
    Train,
    /// Normalize with the given per-channel running statistics.
    Eval { mean: Vec<f64>, var: Vec<f64> },
}

/// Whether the fusion gate multiplies the attention output or is forced to
/// zero, short-circuiting to the identity path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMode {
    Learned,
    ForcedZero,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Elem(Elem, Var, Var),
    Relu(Var),
    Sigmoid(Var),
    /// 2-D x 2-D, N-D x 2-D (leading axes flattened), or batched N-D x N-D
    /// with identical leading axes.
    Matmul(Var, Var),
    /// `a (m x k) * b^T` with `b` stored `n x k`. 2-D only.
    MatmulNT(Var, Var),
    /// Per-frame left-multiplication of `[t, j, c]` by a fixed `j x j` matrix.
    FrameAdj { adj: Tensor, x: Var },
    Softmax { x: Var, axis: usize },
    /// Row softmax over a 2-D input where masked columns are exactly zero.
    /// The mask is not recorded: masked outputs are 0, which already zeroes
    /// their backward contribution.
    MaskedSoftmaxRows { x: Var },
    /// `x: [c_in, t]`, `w: [c_out, c_in, k]`, zero padding, stride 1.
    TemporalConv { x: Var, w: Var },
    /// `x: [t, j, c_in]`, `w: [c_out, c_in, k]` shared across joints.
    TemporalConvTJC { x: Var, w: Var },
    /// Per-channel normalization; `axis` selects the channel axis.
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        axis: usize,
        mode: BnMode,
    },
    Reduce { x: Var, axis: usize, kind: ReduceKind },
    SumAll(Var),
    Abs(Var),
    Scale(Var, f64),
    Concat0(Var, Var),
    Reshape(Var),
    /// Weighted cross-entropy with weighted-mean reduction over rows.
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    Bn { mean: Vec<f64>, var: Vec<f64> },
    Ce { probs: Vec<f64>, weight_sum: f64 },
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
    aux: Aux,
}

/// Execution record plus storage for values and gradients.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op, aux: Aux) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
            aux,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.node(v).grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    /// Batch statistics recorded by a train-mode batch-norm node.
    pub fn bn_batch_stats(&self, v: Var) -> Option<(&[f64], &[f64])> {
        match &self.node(v).aux {
            Aux::Bn { mean, var } => Some((mean, var)),
            _ => None,
        }
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf, Aux::None)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn needs(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.node(*v).requires_grad)
    }

    // ---- elementwise ----

    fn elem(&mut self, kind: Elem, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        let out_shape = broadcast_shape(&sa, &sb)?;
        let va = self.value(a);
        let vb = self.value(b);
        let value = if sa == sb {
            let f = |x: f64, y: f64| match kind {
                Elem::Add => x + y,
                Elem::Sub => x - y,
                Elem::Mul => x * y,
            };
            let data: Vec<f64> = va
                .data()
                .iter()
                .zip(vb.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::new(out_shape.clone(), data)?
        } else {
            broadcast_apply(va, vb, &out_shape, kind)
        };
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, rg, Op::Elem(kind, a, b), Aux::None))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elem(Elem::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elem(Elem::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elem(Elem::Mul, a, b)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|&v| v.max(0.0)).collect(),
        )?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Relu(x), Aux::None))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|&v| k::sigmoid(v)).collect(),
        )?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Sigmoid(x), Aux::None))
    }

    // ---- matmul family ----

    /// Matrix product. Accepts `[m,k] x [k,n]`; `[.., k] x [k, n]` with the
    /// leading axes of the left operand flattened (the right operand is
    /// broadcast over them); or two operands of equal rank > 2 with identical
    /// leading axes (per-batch product).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        let value = matmul_forward(self.value(a), self.value(b), &sa, &sb)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, rg, Op::Matmul(a, b), Aux::None))
    }

    /// `a (m x k) * b^T` where `b` is stored `n x k`. Both operands 2-D.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::shape(format!(
                "matmul_nt wants [m,k] x [n,k], got {:?} x {:?}",
                sa, sb
            )));
        }
        let (m, kk, n) = (sa[0], sa[1], sb[0]);
        let mut out = vec![0.0; m * n];
        k::mm_nt(m, kk, n, self.value(a).data(), self.value(b).data(), &mut out);
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, rg, Op::MatmulNT(a, b), Aux::None))
    }

    /// Two-sided product `a_hat * h * w`; exactly the composition of two
    /// [`Graph::matmul`] calls.
    pub fn graph_conv(&mut self, a_hat: Var, h: Var, w: Var) -> Result<Var> {
        let ah = self.matmul(a_hat, h)?;
        self.matmul(ah, w)
    }

    /// Per-frame product `y_t = adj * x_t` for `x: [t, j, c]`, `adj: j x j`.
    pub fn frame_adj(&mut self, adj: &Tensor, x: Var) -> Result<Var> {
        let sx = self.value(x).shape().to_vec();
        if sx.len() != 3 || adj.shape() != [sx[1], sx[1]] {
            return Err(Error::shape(format!(
                "frame_adj wants [t,j,c] with j x j adj, got {:?} with {:?}",
                sx,
                adj.shape()
            )));
        }
        let (t, j, c) = (sx[0], sx[1], sx[2]);
        let mut out = vec![0.0; t * j * c];
        for tt in 0..t {
            k::mm(
                j,
                j,
                c,
                adj.data(),
                &self.value(x).data()[tt * j * c..(tt + 1) * j * c],
                &mut out[tt * j * c..(tt + 1) * j * c],
            );
        }
        let value = Tensor::new(sx, out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(
            value,
            rg,
            Op::FrameAdj { adj: adj.clone(), x },
            Aux::None,
        ))
    }

    // ---- softmax ----

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(format!(
                "softmax axis {} out of range for {:?}",
                axis, shape
            )));
        }
        let value = softmax_along(self.value(x), axis);
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Softmax { x, axis }, Aux::None))
    }

    /// Row softmax of a 2-D input with per-column validity; invalid columns
    /// are exactly zero in the output.
    pub fn masked_softmax_rows(&mut self, x: Var, valid: &[bool]) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if shape.len() != 2 || shape[1] != valid.len() {
            return Err(Error::shape(format!(
                "masked softmax wants [rows, {}], got {:?}",
                valid.len(),
                shape
            )));
        }
        let mut data = self.value(x).data().to_vec();
        k::masked_softmax_rows(&mut data, shape[0], shape[1], valid);
        let value = Tensor::new(shape, data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::MaskedSoftmaxRows { x }, Aux::None))
    }

    // ---- convolution ----

    /// 1-D cross-correlation along time: `x: [c_in, t]`, `w: [c_out, c_in, k]`
    /// with odd `k`, zero padding, stride 1. Output `[c_out, t]`.
    pub fn temporal_conv(&mut self, x: Var, w: Var) -> Result<Var> {
        let sx = self.value(x).shape().to_vec();
        let sw = self.value(w).shape().to_vec();
        check_conv_shapes(&sx, &sw, 2)?;
        let (c_in, t) = (sx[0], sx[1]);
        let (c_out, kk) = (sw[0], sw[2]);
        let cols = k::im2col_ct(self.value(x).data(), c_in, t, kk);
        let mut out = vec![0.0; c_out * t];
        k::mm(c_out, c_in * kk, t, self.value(w).data(), &cols, &mut out);
        let value = Tensor::new(vec![c_out, t], out)?;
        let rg = self.needs(&[x, w]);
        Ok(self.push(value, rg, Op::TemporalConv { x, w }, Aux::None))
    }

    /// Same convolution applied independently to each joint of `[t, j, c_in]`
    /// with one shared kernel. Output `[t, j, c_out]`.
    pub fn temporal_conv_tjc(&mut self, x: Var, w: Var) -> Result<Var> {
        let sx = self.value(x).shape().to_vec();
        let sw = self.value(w).shape().to_vec();
        check_conv_shapes(&sx, &sw, 3)?;
        let (t, j, c_in) = (sx[0], sx[1], sx[2]);
        let (c_out, kk) = (sw[0], sw[2]);
        let cols = k::im2col_tjc(self.value(x).data(), t, j, c_in, kk);
        let mut y_cjt = vec![0.0; c_out * j * t];
        k::mm(c_out, c_in * kk, j * t, self.value(w).data(), &cols, &mut y_cjt);
        let mut out = vec![0.0; t * j * c_out];
        k::scatter_cjt_to_tjc(&y_cjt, t, j, c_out, &mut out);
        let value = Tensor::new(vec![t, j, c_out], out)?;
        let rg = self.needs(&[x, w]);
        Ok(self.push(value, rg, Op::TemporalConvTJC { x, w }, Aux::None))
    }

    // ---- batch norm ----

    /// Per-channel batch normalization with affine parameters. `axis` selects
    /// the channel axis; statistics pool every other axis. Train mode uses
    /// this input's statistics (retrievable via [`Graph::bn_batch_stats`]);
    /// eval mode uses the provided running statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        axis: usize,
        mode: BnMode,
    ) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(format!(
                "batch_norm axis {} out of range for {:?}",
                axis, shape
            )));
        }
        let c = shape[axis];
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return Err(Error::shape(format!(
                "batch_norm affine params want {} channels, got {} / {}",
                c,
                self.value(gamma).numel(),
                self.value(beta).numel()
            )));
        }
        let strides = strides_of(&shape);
        let (stride, csize) = (strides[axis], c);
        let chan = move |i: usize| (i / stride) % csize;

        let (mean, var) = match &mode {
            BnMode::Train => k::channel_stats(self.value(x).data(), c, chan),
            BnMode::Eval { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(Error::shape(format!(
                        "batch_norm running stats want {} channels, got {} / {}",
                        c,
                        mean.len(),
                        var.len()
                    )));
                }
                (mean.clone(), var.clone())
            }
        };

        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let data: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let cc = chan(i);
                (v - mean[cc]) * inv_std[cc] * g[cc] + b[cc]
            })
            .collect();
        let value = Tensor::new(shape, data)?;
        let rg = self.needs(&[x, gamma, beta]);
        let aux = match mode {
            BnMode::Train => Aux::Bn {
                mean: mean.clone(),
                var: var.clone(),
            },
            BnMode::Eval { .. } => Aux::Bn {
                mean: mean.clone(),
                var: var.clone(),
            },
        };
        Ok(self.push(
            value,
            rg,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                axis,
                mode,
            },
            aux,
        ))
    }

    // ---- reductions and misc ----

    pub fn reduce_sum(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(x, axis, ReduceKind::Sum)
    }

    pub fn reduce_mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(x, axis, ReduceKind::Mean)
    }

    fn reduce(&mut self, x: Var, axis: usize, kind: ReduceKind) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(format!(
                "reduce axis {} out of range for {:?}",
                axis, shape
            )));
        }
        let mut out_shape: Vec<usize> = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let value = reduce_along(self.value(x), &shape, axis, kind, &out_shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Reduce { x, axis, kind }, Aux::None))
    }

    /// Sum of all elements, in flat left-to-right order. Output shape `[1]`.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let mut acc = 0.0;
        for &v in self.value(x).data() {
            acc += v;
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::scalar(acc), rg, Op::SumAll(x), Aux::None))
    }

    /// Elementwise absolute value; the subgradient at 0 is taken as 0.
    pub fn abs(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|v| v.abs()).collect(),
        )?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Abs(x), Aux::None))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|v| v * factor).collect(),
        )?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Scale(x, factor), Aux::None))
    }

    /// Concatenate along axis 0; trailing axes must agree.
    pub fn concat0(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        if sa.len() != sb.len() || sa.is_empty() || sa[1..] != sb[1..] {
            return Err(Error::shape(format!(
                "concat0 wants matching trailing axes, got {:?} vs {:?}",
                sa, sb
            )));
        }
        let mut shape = sa.clone();
        shape[0] += sb[0];
        let mut data = Vec::with_capacity(self.value(a).numel() + self.value(b).numel());
        data.extend_from_slice(self.value(a).data());
        data.extend_from_slice(self.value(b).data());
        let value = Tensor::new(shape, data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, rg, Op::Concat0(a, b), Aux::None))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Reshape(x), Aux::None))
    }

    /// Weighted cross-entropy over rows of `logits: [n, c]` with integer
    /// targets and per-class weights; reduction is the weighted mean
    /// (divide by the sum of the applied weights). Output shape `[1]`.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        class_weights: &[f64],
    ) -> Result<Var> {
        let shape = self.value(logits).shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::shape(format!(
                "cross_entropy wants [n, c] logits, got {:?}",
                shape
            )));
        }
        let (n, c) = (shape[0], shape[1]);
        if targets.len() != n {
            return Err(Error::shape(format!(
                "cross_entropy wants {} targets, got {}",
                n,
                targets.len()
            )));
        }
        if class_weights.len() != c {
            return Err(Error::shape(format!(
                "cross_entropy wants {} class weights, got {}",
                c,
                class_weights.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::data(format!(
                "cross_entropy target {} out of range for {} classes",
                bad, c
            )));
        }
        let mut probs = vec![0.0; n * c];
        let mut loss = 0.0;
        let mut weight_sum = 0.0;
        let data = self.value(logits).data();
        for i in 0..n {
            let row = &data[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &v in row {
                sum += (v - max).exp();
            }
            let lse = max + sum.ln();
            for (j, &v) in row.iter().enumerate() {
                probs[i * c + j] = (v - lse).exp();
            }
            let w = class_weights[targets[i]];
            loss += w * (lse - row[targets[i]]);
            weight_sum += w;
        }
        if weight_sum <= 0.0 {
            return Err(Error::data(
                "cross_entropy: total target weight is zero".to_string(),
            ));
        }
        loss /= weight_sum;
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: class_weights.to_vec(),
            },
            Aux::Ce { probs, weight_sum },
        ))
    }

    // ---- backward ----

    /// Reverse sweep from a scalar loss. Gradients accumulate into `grad`
    /// slots; each recorded operation is visited exactly once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(format!(
                "backward wants a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.node(loss).requires_grad {
            return Ok(());
        }
        let n = loss.0 + 1;
        let mut scratch: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        scratch[loss.0] = Some(Tensor::new(
            self.value(loss).shape().to_vec(),
            vec![1.0],
        )?);

        for idx in (0..n).rev() {
            if scratch[idx].is_none() || !self.nodes[idx].requires_grad {
                continue;
            }
            let g = scratch[idx].take().unwrap();
            self.backprop_node(idx, &g, &mut scratch)?;
            // fold into the persistent accumulator
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(acc) => {
                    for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += b;
                    }
                }
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn accum(&self, scratch: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.node(v).requires_grad {
            return;
        }
        match &mut scratch[v.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(
        &mut self,
        idx: usize,
        g: &Tensor,
        scratch: &mut [Option<Tensor>],
    ) -> Result<()> {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf => {}
            Op::Elem(kind, a, b) => {
                let sa = self.value(a).shape().to_vec();
                let sb = self.value(b).shape().to_vec();
                if self.node(a).requires_grad {
                    let da = match kind {
                        Elem::Add | Elem::Sub => g.clone(),
                        Elem::Mul => broadcast_apply(
                            g,
                            self.value(b),
                            g.shape(),
                            Elem::Mul,
                        ),
                    };
                    self.accum(scratch, a, reduce_to_shape(&da, &sa));
                }
                if self.node(b).requires_grad {
                    let db = match kind {
                        Elem::Add => g.clone(),
                        Elem::Sub => {
                            Tensor::new(g.shape().to_vec(), g.data().iter().map(|v| -v).collect())?
                        }
                        Elem::Mul => broadcast_apply(
                            g,
                            self.value(a),
                            g.shape(),
                            Elem::Mul,
                        ),
                    };
                    self.accum(scratch, b, reduce_to_shape(&db, &sb));
                }
            }
            Op::Relu(x) => {
                if self.node(x).requires_grad {
                    let dx: Vec<f64> = self
                        .value(x)
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&xv, &gv)| if xv > 0.0 { gv } else { 0.0 })
                        .collect();
                    self.accum(scratch, x, Tensor::new(g.shape().to_vec(), dx)?);
                }
            }
            Op::Sigmoid(x) => {
                if self.node(x).requires_grad {
                    let y = self.nodes[idx].value.data();
                    let dx: Vec<f64> = y
                        .iter()
                        .zip(g.data())
                        .map(|(&yv, &gv)| gv * yv * (1.0 - yv))
                        .collect();
                    self.accum(scratch, x, Tensor::new(g.shape().to_vec(), dx)?);
                }
            }
            Op::Matmul(a, b) => self.backprop_matmul(a, b, g, scratch)?,
            Op::MatmulNT(a, b) => {
                let sa = self.value(a).shape().to_vec();
                let sb = self.value(b).shape().to_vec();
                let (m, kk, n) = (sa[0], sa[1], sb[0]);
                if self.node(a).requires_grad {
                    // dA = dC * B  ([m,n] x [n,k])
                    let mut da = vec![0.0; m * kk];
                    k::mm_acc(m, n, kk, g.data(), self.value(b).data(), &mut da);
                    self.accum(scratch, a, Tensor::new(sa.clone(), da)?);
                }
                if self.node(b).requires_grad {
                    // dB = dC^T * A  ([n,m] x [m,k])
                    let mut db = vec![0.0; n * kk];
                    k::mm_tn_acc(n, m, kk, g.data(), self.value(a).data(), &mut db);
                    self.accum(scratch, b, Tensor::new(sb.clone(), db)?);
                }
            }
            Op::FrameAdj { adj, x } => {
                if self.node(x).requires_grad {
                    let sx = self.value(x).shape().to_vec();
                    let (t, j, c) = (sx[0], sx[1], sx[2]);
                    let mut dx = vec![0.0; t * j * c];
                    for tt in 0..t {
                        k::mm_tn_acc(
                            j,
                            j,
                            c,
                            adj.data(),
                            &g.data()[tt * j * c..(tt + 1) * j * c],
                            &mut dx[tt * j * c..(tt + 1) * j * c],
                        );
                    }
                    self.accum(scratch, x, Tensor::new(sx, dx)?);
                }
            }
            Op::Softmax { x, axis } => {
                if self.node(x).requires_grad {
                    let y = &self.nodes[idx].value;
                    let dx = softmax_backward(y, g, axis);
                    self.accum(scratch, x, dx);
                }
            }
            Op::MaskedSoftmaxRows { x } => {
                if self.node(x).requires_grad {
                    // Invalid columns have y == 0, which zeroes both the dot
                    // product contribution and the output gradient.
                    let y = &self.nodes[idx].value;
                    let dx = softmax_backward(y, g, 1);
                    self.accum(scratch, x, dx);
                }
            }
            Op::TemporalConv { x, w } => {
                let sx = self.value(x).shape().to_vec();
                let sw = self.value(w).shape().to_vec();
                let (c_in, t) = (sx[0], sx[1]);
                let (c_out, kk) = (sw[0], sw[2]);
                let need_x = self.node(x).requires_grad;
                let need_w = self.node(w).requires_grad;
                if need_x || need_w {
                    let cols = k::im2col_ct(self.value(x).data(), c_in, t, kk);
                    if need_w {
                        let mut dw = vec![0.0; c_out * c_in * kk];
                        k::mm_nt_acc(c_out, t, c_in * kk, g.data(), &cols, &mut dw);
                        self.accum(scratch, w, Tensor::new(sw.clone(), dw)?);
                    }
                    if need_x {
                        let mut dcols = vec![0.0; c_in * kk * t];
                        k::mm_tn_acc(
                            c_in * kk,
                            c_out,
                            t,
                            self.value(w).data(),
                            g.data(),
                            &mut dcols,
                        );
                        let mut dx = vec![0.0; c_in * t];
                        k::col2im_ct(&dcols, c_in, t, kk, &mut dx);
                        self.accum(scratch, x, Tensor::new(sx, dx)?);
                    }
                }
            }
            Op::TemporalConvTJC { x, w } => {
                let sx = self.value(x).shape().to_vec();
                let sw = self.value(w).shape().to_vec();
                let (t, j, c_in) = (sx[0], sx[1], sx[2]);
                let (c_out, kk) = (sw[0], sw[2]);
                let need_x = self.node(x).requires_grad;
                let need_w = self.node(w).requires_grad;
                if need_x || need_w {
                    let g_cjt = k::gather_tjc_to_cjt(g.data(), t, j, c_out);
                    let cols = k::im2col_tjc(self.value(x).data(), t, j, c_in, kk);
                    if need_w {
                        let mut dw = vec![0.0; c_out * c_in * kk];
                        k::mm_nt_acc(c_out, j * t, c_in * kk, &g_cjt, &cols, &mut dw);
                        self.accum(scratch, w, Tensor::new(sw.clone(), dw)?);
                    }
                    if need_x {
                        let mut dcols = vec![0.0; c_in * kk * j * t];
                        k::mm_tn_acc(
                            c_in * kk,
                            c_out,
                            j * t,
                            self.value(w).data(),
                            &g_cjt,
                            &mut dcols,
                        );
                        let mut dx = vec![0.0; t * j * c_in];
                        k::col2im_tjc(&dcols, t, j, c_in, kk, &mut dx);
                        self.accum(scratch, x, Tensor::new(sx, dx)?);
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                axis,
                ref mode,
            } => {
                let (mean, var) = match &self.nodes[idx].aux {
                    Aux::Bn { mean, var } => (mean.clone(), var.clone()),
                    _ => unreachable!("batch_norm node without stats"),
                };
                let train = matches!(mode, BnMode::Train);
                self.backprop_bn(x, gamma, beta, axis, &mean, &var, train, g, scratch)?;
            }
            Op::Reduce { x, axis, kind } => {
                if self.node(x).requires_grad {
                    let sx = self.value(x).shape().to_vec();
                    let n = sx[axis] as f64;
                    let factor = match kind {
                        ReduceKind::Sum => 1.0,
                        ReduceKind::Mean => 1.0 / n,
                    };
                    let dx = broadcast_along(g, &sx, axis, factor);
                    self.accum(scratch, x, dx);
                }
            }
            Op::SumAll(x) => {
                if self.node(x).requires_grad {
                    let gv = g.data()[0];
                    self.accum(
                        scratch,
                        x,
                        Tensor::full(self.value(x).shape(), gv),
                    );
                }
            }
            Op::Abs(x) => {
                if self.node(x).requires_grad {
                    let dx: Vec<f64> = self
                        .value(x)
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&xv, &gv)| {
                            if xv > 0.0 {
                                gv
                            } else if xv < 0.0 {
                                -gv
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    self.accum(scratch, x, Tensor::new(g.shape().to_vec(), dx)?);
                }
            }
            Op::Scale(x, factor) => {
                if self.node(x).requires_grad {
                    let dx: Vec<f64> = g.data().iter().map(|v| v * factor).collect();
                    self.accum(scratch, x, Tensor::new(g.shape().to_vec(), dx)?);
                }
            }
            Op::Concat0(a, b) => {
                let na = self.value(a).numel();
                if self.node(a).requires_grad {
                    let da = Tensor::new(
                        self.value(a).shape().to_vec(),
                        g.data()[..na].to_vec(),
                    )?;
                    self.accum(scratch, a, da);
                }
                if self.node(b).requires_grad {
                    let db = Tensor::new(
                        self.value(b).shape().to_vec(),
                        g.data()[na..].to_vec(),
                    )?;
                    self.accum(scratch, b, db);
                }
            }
            Op::Reshape(x) => {
                if self.node(x).requires_grad {
                    let dx = g.reshape(self.value(x).shape())?;
                    self.accum(scratch, x, dx);
                }
            }
            Op::CrossEntropy {
                logits,
                ref targets,
                ref weights,
            } => {
                if self.node(logits).requires_grad {
                    let (probs, weight_sum) = match &self.nodes[idx].aux {
                        Aux::Ce { probs, weight_sum } => (probs.clone(), *weight_sum),
                        _ => unreachable!("cross_entropy node without probs"),
                    };
                    let shape = self.value(logits).shape().to_vec();
                    let (n, c) = (shape[0], shape[1]);
                    let gv = g.data()[0];
                    let mut dx = probs;
                    for i in 0..n {
                        let coeff = gv * weights[targets[i]] / weight_sum;
                        for j in 0..c {
                            let delta = if j == targets[i] { 1.0 } else { 0.0 };
                            dx[i * c + j] = coeff * (dx[i * c + j] - delta);
                        }
                    }
                    self.accum(scratch, logits, Tensor::new(shape, dx)?);
                }
            }
        }
        Ok(())
    }

    fn backprop_matmul(
        &mut self,
        a: Var,
        b: Var,
        g: &Tensor,
        scratch: &mut [Option<Tensor>],
    ) -> Result<()> {
        let sa = self.value(a).shape().to_vec();
        let sb = self.value(b).shape().to_vec();
        if sb.len() == 2 {
            // flattened-rows case covers plain 2-D as well
            let kk = sb[0];
            let n = sb[1];
            let rows: usize = sa[..sa.len() - 1].iter().product();
            if self.node(a).requires_grad {
                let mut da = vec![0.0; rows * kk];
                k::mm_nt_acc(rows, n, kk, g.data(), self.value(b).data(), &mut da);
                self.accum(scratch, a, Tensor::new(sa.clone(), da)?);
            }
            if self.node(b).requires_grad {
                let mut db = vec![0.0; kk * n];
                k::mm_tn_acc(kk, rows, n, self.value(a).data(), g.data(), &mut db);
                self.accum(scratch, b, Tensor::new(sb.clone(), db)?);
            }
        } else {
            // batched: identical leading axes
            let (ba, m, kk) = (
                sa[..sa.len() - 2].iter().product::<usize>(),
                sa[sa.len() - 2],
                sa[sa.len() - 1],
            );
            let n = sb[sb.len() - 1];
            let need_a = self.node(a).requires_grad;
            let need_b = self.node(b).requires_grad;
            let mut da = vec![0.0; ba * m * kk];
            let mut db = vec![0.0; ba * kk * n];
            for i in 0..ba {
                let gs = &g.data()[i * m * n..(i + 1) * m * n];
                if need_a {
                    k::mm_nt_acc(
                        m,
                        n,
                        kk,
                        gs,
                        &self.value(b).data()[i * kk * n..(i + 1) * kk * n],
                        &mut da[i * m * kk..(i + 1) * m * kk],
                    );
                }
                if need_b {
                    k::mm_tn_acc(
                        kk,
                        m,
                        n,
                        &self.value(a).data()[i * m * kk..(i + 1) * m * kk],
                        gs,
                        &mut db[i * kk * n..(i + 1) * kk * n],
                    );
                }
            }
            if need_a {
                self.accum(scratch, a, Tensor::new(sa.clone(), da)?);
            }
            if need_b {
                self.accum(scratch, b, Tensor::new(sb.clone(), db)?);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_bn(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        axis: usize,
        mean: &[f64],
        var: &[f64],
        train: bool,
        g: &Tensor,
        scratch: &mut [Option<Tensor>],
    ) -> Result<()> {
        let shape = self.value(x).shape().to_vec();
        let strides = strides_of(&shape);
        let (stride, c) = (strides[axis], shape[axis]);
        let chan = |i: usize| (i / stride) % c;
        let n_per = (self.value(x).numel() / c) as f64;
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

        let xd = self.value(x).data();
        let gd = g.data();
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for (i, (&xv, &gv)) in xd.iter().zip(gd).enumerate() {
            let cc = chan(i);
            let xhat = (xv - mean[cc]) * inv_std[cc];
            sum_dy[cc] += gv;
            sum_dy_xhat[cc] += gv * xhat;
        }

        if self.node(gamma).requires_grad {
            self.accum(
                scratch,
                gamma,
                Tensor::new(self.value(gamma).shape().to_vec(), sum_dy_xhat.clone())?,
            );
        }
        if self.node(beta).requires_grad {
            self.accum(
                scratch,
                beta,
                Tensor::new(self.value(beta).shape().to_vec(), sum_dy.clone())?,
            );
        }
        if self.node(x).requires_grad {
            let gm = self.value(gamma).data();
            let dx: Vec<f64> = xd
                .iter()
                .zip(gd)
                .enumerate()
                .map(|(i, (&xv, &gv))| {
                    let cc = chan(i);
                    if train {
                        let xhat = (xv - mean[cc]) * inv_std[cc];
                        gm[cc] * inv_std[cc]
                            * (gv - sum_dy[cc] / n_per - xhat * sum_dy_xhat[cc] / n_per)
                    } else {
                        gv * gm[cc] * inv_std[cc]
                    }
                })
                .collect();
            self.accum(scratch, x, Tensor::new(shape, dx)?);
        }
        Ok(())
    }
}

// ---- free helpers ----

fn matmul_forward(a: &Tensor, b: &Tensor, sa: &[usize], sb: &[usize]) -> Result<Tensor> {
    if sa.len() < 2 || sb.len() < 2 {
        return Err(Error::shape(format!(
            "matmul wants rank >= 2, got {:?} x {:?}",
            sa, sb
        )));
    }
    if sb.len() == 2 {
        let kk = sb[0];
        if sa[sa.len() - 1] != kk {
            return Err(Error::shape(format!(
                "matmul inner dimensions disagree: {:?} x {:?}",
                sa, sb
            )));
        }
        let rows: usize = sa[..sa.len() - 1].iter().product();
        let n = sb[1];
        let mut out = vec![0.0; rows * n];
        k::mm(rows, kk, n, a.data(), b.data(), &mut out);
        let mut shape = sa[..sa.len() - 1].to_vec();
        shape.push(n);
        Tensor::new(shape, out)
    } else {
        if sa.len() != sb.len() || sa[..sa.len() - 2] != sb[..sb.len() - 2] {
            return Err(Error::shape(format!(
                "batched matmul wants identical leading axes, got {:?} x {:?}",
                sa, sb
            )));
        }
        let (m, kk) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if kk != kb {
            return Err(Error::shape(format!(
                "matmul inner dimensions disagree: {:?} x {:?}",
                sa, sb
            )));
        }
        let batches: usize = sa[..sa.len() - 2].iter().product();
        let mut out = vec![0.0; batches * m * n];
        for i in 0..batches {
            k::mm(
                m,
                kk,
                n,
                &a.data()[i * m * kk..(i + 1) * m * kk],
                &b.data()[i * kk * n..(i + 1) * kk * n],
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let mut shape = sa[..sa.len() - 2].to_vec();
        shape.push(m);
        shape.push(n);
        Tensor::new(shape, out)
    }
}

fn check_conv_shapes(sx: &[usize], sw: &[usize], x_rank: usize) -> Result<()> {
    if sx.len() != x_rank || sw.len() != 3 {
        return Err(Error::shape(format!(
            "temporal conv wants rank-{} input and [c_out, c_in, k] weight, got {:?} and {:?}",
            x_rank, sx, sw
        )));
    }
    let c_in = if x_rank == 2 { sx[0] } else { sx[2] };
    if sw[1] != c_in {
        return Err(Error::shape(format!(
            "temporal conv input channels {} do not match weight {:?}",
            c_in, sw
        )));
    }
    if sw[2] % 2 == 0 {
        return Err(Error::shape(format!(
            "temporal conv wants an odd kernel width, got {}",
            sw[2]
        )));
    }
    Ok(())
}

fn broadcast_apply(a: &Tensor, b: &Tensor, out_shape: &[usize], kind: Elem) -> Tensor {
    let out_strides = strides_of(out_shape);
    let sa = a.shape();
    let sb = b.shape();
    let sta = strides_of(sa);
    let stb = strides_of(sb);
    let numel: usize = out_shape.iter().product();
    let mut data = vec![0.0; numel];
    for (i, slot) in data.iter_mut().enumerate() {
        let mut ia = 0;
        let mut ib = 0;
        for d in 0..out_shape.len() {
            let idx = (i / out_strides[d]) % out_shape[d];
            if sa[d] > 1 {
                ia += idx * sta[d];
            }
            if sb[d] > 1 {
                ib += idx * stb[d];
            }
        }
        let (x, y) = (a.data()[ia], b.data()[ib]);
        *slot = match kind {
            Elem::Add => x + y,
            Elem::Sub => x - y,
            Elem::Mul => x * y,
        };
    }
    Tensor::new(out_shape.to_vec(), data).expect("broadcast shape consistent")
}

/// Sum `g` down to `target` over every axis where `target` has size 1.
fn reduce_to_shape(g: &Tensor, target: &[usize]) -> Tensor {
    if g.shape() == target {
        return g.clone();
    }
    let gs = g.shape();
    let g_strides = strides_of(gs);
    let t_strides = strides_of(target);
    let numel: usize = target.iter().product();
    let mut out = vec![0.0; numel];
    for (i, &v) in g.data().iter().enumerate() {
        let mut ti = 0;
        for d in 0..gs.len() {
            let idx = (i / g_strides[d]) % gs[d];
            if target[d] > 1 {
                ti += idx * t_strides[d];
            }
        }
        out[ti] += v;
    }
    Tensor::new(target.to_vec(), out).expect("reduced shape consistent")
}

fn softmax_along(x: &Tensor, axis: usize) -> Tensor {
    let shape = x.shape();
    if axis == shape.len() - 1 {
        let cols = shape[axis];
        let rows = x.numel() / cols.max(1);
        let mut data = x.data().to_vec();
        k::softmax_rows(&mut data, rows, cols);
        return Tensor::new(shape.to_vec(), data).expect("softmax shape consistent");
    }
    let strides = strides_of(shape);
    let n = shape[axis];
    let stride = strides[axis];
    let mut data = x.data().to_vec();
    let outer = x.numel() / n;
    for o in 0..outer {
        // start index of this slice
        let base = (o / stride) * stride * n + (o % stride);
        let mut max = f64::NEG_INFINITY;
        for i in 0..n {
            max = max.max(data[base + i * stride]);
        }
        let mut sum = 0.0;
        for i in 0..n {
            let e = (data[base + i * stride] - max).exp();
            data[base + i * stride] = e;
            sum += e;
        }
        for i in 0..n {
            data[base + i * stride] /= sum;
        }
    }
    Tensor::new(shape.to_vec(), data).expect("softmax shape consistent")
}

fn softmax_backward(y: &Tensor, g: &Tensor, axis: usize) -> Tensor {
    let shape = y.shape();
    let strides = strides_of(shape);
    let n = shape[axis];
    let stride = strides[axis];
    let outer = y.numel() / n;
    let mut dx = vec![0.0; y.numel()];
    for o in 0..outer {
        let base = (o / stride) * stride * n + (o % stride);
        let mut dot = 0.0;
        for i in 0..n {
            let idx = base + i * stride;
            dot += g.data()[idx] * y.data()[idx];
        }
        for i in 0..n {
            let idx = base + i * stride;
            dx[idx] = y.data()[idx] * (g.data()[idx] - dot);
        }
    }
    Tensor::new(shape.to_vec(), dx).expect("softmax grad shape consistent")
}

fn reduce_along(
    x: &Tensor,
    shape: &[usize],
    axis: usize,
    kind: ReduceKind,
    out_shape: &[usize],
) -> Result<Tensor> {
    let strides = strides_of(shape);
    let n = shape[axis];
    let stride = strides[axis];
    let outer = x.numel() / n;
    let mut out = vec![0.0; outer];
    for o in 0..outer {
        let base = (o / stride) * stride * n + (o % stride);
        let mut acc = 0.0;
        for i in 0..n {
            acc += x.data()[base + i * stride];
        }
        out[o] = match kind {
            ReduceKind::Sum => acc,
            ReduceKind::Mean => acc / n as f64,
        };
    }
    Tensor::new(out_shape.to_vec(), out)
}

fn broadcast_along(g: &Tensor, target: &[usize], axis: usize, factor: f64) -> Tensor {
    let strides = strides_of(target);
    let n = target[axis];
    let stride = strides[axis];
    let numel: usize = target.iter().product();
    let outer = numel / n;
    let mut out = vec![0.0; numel];
    for o in 0..outer {
        let base = (o / stride) * stride * n + (o % stride);
        let gv = g.data()[o] * factor;
        for i in 0..n {
            out[base + i * stride] = gv;
        }
    }
    Tensor::new(target.to_vec(), out).expect("broadcast shape consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1(data: &[f64]) -> Tensor {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    fn t2(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::new(vec![rows, cols], data.to_vec()).unwrap()
    }

    #[test]
    fn add_mul_chain_accumulates_into_shared_input() {
        // loss = sum(a*b + a); d/da = b + 1, d/db = a
        let mut g = Graph::new();
        let a = g.leaf(t1(&[2.0, -3.0]), true);
        let b = g.leaf(t1(&[5.0, 7.0]), true);
        let ab = g.mul(a, b).unwrap();
        let s = g.add(ab, a).unwrap();
        let loss = g.sum_all(s).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[6.0, 8.0]);
        assert_eq!(g.grad(b).unwrap().data(), &[2.0, -3.0]);
    }

    #[test]
    fn backward_twice_doubles_gradients() {
        let mut g = Graph::new();
        let x = g.leaf(t1(&[1.0, 2.0, 3.0]), true);
        let y = g.mul(x, x).unwrap();
        let loss = g.sum_all(y).unwrap();
        g.backward(loss).unwrap();
        let first: Vec<f64> = g.grad(x).unwrap().data().to_vec();
        assert_eq!(first, vec![2.0, 4.0, 6.0]);
        g.backward(loss).unwrap();
        let second: Vec<f64> = g.grad(x).unwrap().data().to_vec();
        assert_eq!(second, vec![4.0, 8.0, 12.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::new();
        let x = g.leaf(t1(&[1.0, 2.0]), true);
        let y = g.relu(x).unwrap();
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn sum_all_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf(t2(2, 2, &[1.0, -1.0, 0.5, 2.0]), true);
        let loss = g.sum_all(x).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn matmul_identity_returns_input() {
        let mut g = Graph::new();
        let eye = g.constant(t2(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
        let a = g.leaf(t2(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), false);
        let out = g.matmul(eye, a).unwrap();
        assert_eq!(g.value(out).data(), g.value(a).data());
    }

    #[test]
    fn matmul_2d_oracle_and_gradients() {
        // a: 2x3, b: 3x2, loss = sum(a b)
        let mut g = Graph::new();
        let a = g.leaf(t2(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), true);
        let b = g.leaf(t2(3, 2, &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]), true);
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[58.0, 64.0, 139.0, 154.0]);
        let loss = g.sum_all(c).unwrap();
        g.backward(loss).unwrap();
        // dA = ones(2x2) * B^T; row i of dA = col sums of B rows
        assert_eq!(g.grad(a).unwrap().data(), &[15.0, 19.0, 23.0, 15.0, 19.0, 23.0]);
        // dB = A^T * ones(2x2)
        assert_eq!(g.grad(b).unwrap().data(), &[5.0, 5.0, 7.0, 7.0, 9.0, 9.0]);
    }

    #[test]
    fn matmul_nt_matches_explicit_transpose() {
        let mut g = Graph::new();
        let a = g.leaf(t2(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), false);
        let bt = g.leaf(t2(2, 3, &[1.0, 0.0, 1.0, 0.0, 2.0, 0.0]), false);
        let c = g.matmul_nt(a, bt).unwrap();
        // b = [[1,0],[0,2],[1,0]]; a*b = [[4,4],[10,10]]
        assert_eq!(g.value(c).data(), &[4.0, 4.0, 10.0, 10.0]);
    }

    #[test]
    fn graph_conv_is_composed_matmuls_bit_for_bit() {
        let mut g = Graph::new();
        let a_hat = g.constant(t2(2, 2, &[0.5, 0.5, 0.5, 0.5]));
        let h = g.leaf(t2(2, 1, &[2.0, 4.0]), false);
        let w = g.leaf(t2(1, 1, &[1.0]), false);
        let y = g.graph_conv(a_hat, h, w).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 3.0]);

        let ah = g.matmul(a_hat, h).unwrap();
        let y2 = g.matmul(ah, w).unwrap();
        assert_eq!(g.value(y).data(), g.value(y2).data());
    }

    #[test]
    fn softmax_rows_sum_to_one_and_backward_sums_to_zero() {
        let mut g = Graph::new();
        let x = g.leaf(t2(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 1.0]), true);
        let y = g.softmax(x, 1).unwrap();
        for r in 0..2 {
            let s: f64 = g.value(y).data()[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        // d(sum of first column)/dx: each row's grad sums to zero
        let col_mask = g.constant(t2(2, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
        let masked = g.mul(y, col_mask).unwrap();
        let loss = g.sum_all(masked).unwrap();
        g.backward(loss).unwrap();
        let dx = g.grad(x).unwrap();
        for r in 0..2 {
            let s: f64 = dx.data()[r * 3..(r + 1) * 3].iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let base = [3.0, -1.0, 0.5, 2.0];
        let mut g = Graph::new();
        let x = g.leaf(t2(1, 4, &base), false);
        let shifted: Vec<f64> = base.iter().map(|v| v + 1234.5).collect();
        let xs = g.leaf(t2(1, 4, &shifted), false);
        let y = g.softmax(x, 1).unwrap();
        let ys = g.softmax(xs, 1).unwrap();
        for (a, b) in g.value(y).data().iter().zip(g.value(ys).data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_over_non_last_axis() {
        let mut g = Graph::new();
        let x = g.leaf(t2(2, 2, &[0.0, 10.0, 0.0, -10.0]), false);
        let y = g.softmax(x, 0).unwrap();
        // columns sum to one
        for cidx in 0..2 {
            let s = g.value(y).data()[cidx] + g.value(y).data()[2 + cidx];
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!((g.value(y).data()[0] - 0.5).abs() < 1e-12);
        assert!(g.value(y).data()[1] > 0.999);
    }

    #[test]
    fn masked_softmax_masks_columns_exactly() {
        let mut g = Graph::new();
        let x = g.leaf(t2(2, 4, &[5.0, 1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0]), true);
        let y = g
            .masked_softmax_rows(x, &[true, true, false, true])
            .unwrap();
        for r in 0..2 {
            assert_eq!(g.value(y).data()[r * 4 + 2], 0.0);
            let s: f64 = g.value(y).data()[r * 4..(r + 1) * 4].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        // gradient through a masked column is exactly zero
        let mask = g.constant(t2(2, 4, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]));
        let picked = g.mul(y, mask).unwrap();
        let loss = g.sum_all(picked).unwrap();
        g.backward(loss).unwrap();
        let dx = g.grad(x).unwrap();
        assert_eq!(dx.data()[2], 0.0);
        assert_eq!(dx.data()[6], 0.0);
    }

    #[test]
    fn temporal_conv_ones_example_and_delta_identity() {
        let mut g = Graph::new();
        let x = g.leaf(t2(1, 3, &[1.0, 1.0, 1.0]), false);
        let w = g.leaf(Tensor::new(vec![1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap(), false);
        let y = g.temporal_conv(x, w).unwrap();
        assert_eq!(g.value(y).data(), &[2.0, 3.0, 2.0]);

        // delta kernel reproduces the input
        let x2 = g.leaf(t2(2, 5, &[1.0, 2.0, 3.0, 4.0, 5.0, -1.0, -2.0, -3.0, -4.0, -5.0]), false);
        let mut wd = vec![0.0; 2 * 2 * 3];
        // w[o][c][1] = 1 when o == c
        wd[0 * 6 + 0 * 3 + 1] = 1.0;
        wd[1 * 6 + 1 * 3 + 1] = 1.0;
        let w2 = g.leaf(Tensor::new(vec![2, 2, 3], wd).unwrap(), false);
        let y2 = g.temporal_conv(x2, w2).unwrap();
        assert_eq!(g.value(y2).data(), g.value(x2).data());
    }

    #[test]
    fn temporal_conv_rejects_even_kernel() {
        let mut g = Graph::new();
        let x = g.leaf(t2(1, 4, &[1.0; 4]), false);
        let w = g.leaf(Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap(), false);
        assert!(g.temporal_conv(x, w).is_err());
    }

    #[test]
    fn bn_train_constant_channel_is_zero_pre_affine() {
        let mut g = Graph::new();
        let x = g.leaf(t2(1, 4, &[3.0, 3.0, 3.0, 3.0]), false);
        let gamma = g.leaf(t1(&[1.0]), false);
        let beta = g.leaf(t1(&[0.0]), false);
        let y = g.batch_norm(x, gamma, beta, 0, BnMode::Train).unwrap();
        for &v in g.value(y).data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn bn_train_two_point_channel() {
        let mut g = Graph::new();
        let x = g.leaf(t2(1, 2, &[-1.0, 1.0]), false);
        let gamma = g.leaf(t1(&[1.0]), false);
        let beta = g.leaf(t1(&[0.0]), false);
        let y = g.batch_norm(x, gamma, beta, 0, BnMode::Train).unwrap();
        let want = 1.0 / (1.0 + BN_EPS).sqrt();
        assert!((g.value(y).data()[0] + want).abs() < 1e-12);
        assert!((g.value(y).data()[1] - want).abs() < 1e-12);
        let (mean, var) = g.bn_batch_stats(y).unwrap();
        assert_eq!(mean, &[0.0]);
        assert_eq!(var, &[1.0]);
    }

    #[test]
    fn bn_eval_with_unit_stats_is_near_identity() {
        let mut g = Graph::new();
        let x = g.leaf(t2(1, 3, &[0.5, -0.25, 1.0]), false);
        let gamma = g.leaf(t1(&[1.0]), false);
        let beta = g.leaf(t1(&[0.0]), false);
        let y = g
            .batch_norm(
                x,
                gamma,
                beta,
                0,
                BnMode::Eval {
                    mean: vec![0.0],
                    var: vec![1.0],
                },
            )
            .unwrap();
        for (a, b) in g.value(y).data().iter().zip(g.value(x).data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn bn_channel_axis_last() {
        // [t=2, j=1, c=2]: channel 0 = {1, 3}, channel 1 = {10, 30}
        let mut g = Graph::new();
        let x = g.leaf(
            Tensor::new(vec![2, 1, 2], vec![1.0, 10.0, 3.0, 30.0]).unwrap(),
            false,
        );
        let gamma = g.leaf(t1(&[1.0, 1.0]), false);
        let beta = g.leaf(t1(&[0.0, 0.0]), false);
        let y = g.batch_norm(x, gamma, beta, 2, BnMode::Train).unwrap();
        let (mean, var) = g.bn_batch_stats(y).unwrap();
        assert_eq!(mean, &[2.0, 20.0]);
        assert_eq!(var, &[1.0, 100.0]);
        let d = g.value(y).data();
        assert!(d[0] < 0.0 && d[2] > 0.0 && d[1] < 0.0 && d[3] > 0.0);
    }

    #[test]
    fn reduce_mean_rows_and_backward() {
        let mut g = Graph::new();
        let x = g.leaf(t2(2, 4, &[1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0]), true);
        let m = g.reduce_mean(x, 1).unwrap();
        assert_eq!(g.value(m).shape(), &[2]);
        assert_eq!(g.value(m).data(), &[2.5, 25.0]);
        let loss = g.sum_all(m).unwrap();
        g.backward(loss).unwrap();
        for &v in g.grad(x).unwrap().data() {
            assert_eq!(v, 0.25);
        }
    }

    #[test]
    fn reduce_sum_middle_axis() {
        let mut g = Graph::new();
        let x = g.leaf(
            Tensor::new(vec![2, 3, 2], (1..=12).map(|v| v as f64).collect()).unwrap(),
            false,
        );
        let s = g.reduce_sum(x, 1).unwrap();
        assert_eq!(g.value(s).shape(), &[2, 2]);
        // slice 0: rows [1,2],[3,4],[5,6] -> [9, 12]
        assert_eq!(g.value(s).data(), &[9.0, 12.0, 27.0, 30.0]);
    }

    #[test]
    fn abs_subgradient_zero_at_kink() {
        let mut g = Graph::new();
        let x = g.leaf(t1(&[-2.0, 0.0, 3.0]), true);
        let y = g.abs(x).unwrap();
        assert_eq!(g.value(y).data(), &[2.0, 0.0, 3.0]);
        let loss = g.sum_all(y).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_zero_input_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(t1(&[-1.0, 0.0, 2.0]), true);
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
        let loss = g.sum_all(y).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn broadcast_add_bias_row() {
        let mut g = Graph::new();
        let x = g.leaf(t2(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), true);
        let bias = g.leaf(t2(1, 2, &[10.0, 20.0]), true);
        let y = g.add(x, bias).unwrap();
        assert_eq!(g.value(y).data(), &[11.0, 22.0, 13.0, 24.0, 15.0, 26.0]);
        let loss = g.sum_all(y).unwrap();
        g.backward(loss).unwrap();
        // bias gradient sums over the broadcast rows
        assert_eq!(g.grad(bias).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn broadcast_mul_scalar_gate() {
        let mut g = Graph::new();
        let x = g.leaf(t2(2, 2, &[1.0, 2.0, 3.0, 4.0]), true);
        let gate = g.leaf(t2(1, 1, &[0.5]), true);
        let y = g.mul(x, gate).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 1.0, 1.5, 2.0]);
        let loss = g.sum_all(y).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(gate).unwrap().data(), &[10.0]);
        assert_eq!(g.grad(x).unwrap().data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn mismatched_shapes_error() {
        let mut g = Graph::new();
        let a = g.leaf(t2(2, 3, &[0.0; 6]), false);
        let b = g.leaf(t2(3, 2, &[0.0; 6]), false);
        assert!(g.add(a, b).is_err());
        let c = g.leaf(t2(2, 2, &[0.0; 4]), false);
        assert!(g.matmul(a, c).is_err());
    }

    #[test]
    fn concat_and_reshape_roundtrip_gradients() {
        let mut g = Graph::new();
        let a = g.leaf(t2(1, 2, &[1.0, 2.0]), true);
        let b = g.leaf(t2(2, 2, &[3.0, 4.0, 5.0, 6.0]), true);
        let cat = g.concat0(a, b).unwrap();
        assert_eq!(g.value(cat).shape(), &[3, 2]);
        let flat = g.reshape(cat, &[6]).unwrap();
        let w = g.constant(t1(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let prod = g.mul(flat, w).unwrap();
        let loss = g.sum_all(prod).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[1.0, 2.0]);
        assert_eq!(g.grad(b).unwrap().data(), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn cross_entropy_uniform_and_perfect() {
        let mut g = Graph::new();
        let logits = g.leaf(t2(2, 4, &[0.0; 8]), false);
        let w = [1.0, 1.0, 1.0, 1.0];
        let loss = g.cross_entropy(logits, &[0, 3], &w).unwrap();
        assert!((g.value(loss).item() - 4.0f64.ln()).abs() < 1e-12);

        let mut g2 = Graph::new();
        let strong = g2.leaf(t2(1, 4, &[30.0, 0.0, 0.0, 0.0]), false);
        let loss2 = g2.cross_entropy(strong, &[0], &w).unwrap();
        assert!(g2.value(loss2).item() < 1e-3);
    }

    #[test]
    fn cross_entropy_weighted_mean_oracle() {
        // Hand formula: L = sum_i w[y_i] * nll_i / sum_i w[y_i]
        let mut g = Graph::new();
        let logits = g.leaf(t2(2, 2, &[1.0, 0.0, 0.0, 2.0]), true);
        let w = [0.5, 2.0];
        let loss = g.cross_entropy(logits, &[0, 1], &w).unwrap();
        let nll0 = -(1.0f64.exp() / (1.0f64.exp() + 1.0)).ln();
        let nll1 = -(2.0f64.exp() / (2.0f64.exp() + 1.0)).ln();
        let want = (0.5 * nll0 + 2.0 * nll1) / 2.5;
        assert!((g.value(loss).item() - want).abs() < 1e-12);

        g.backward(loss).unwrap();
        let dl = g.grad(logits).unwrap();
        // row 0: (w0 / W) * (p - onehot0)
        let p00 = 1.0f64.exp() / (1.0f64.exp() + 1.0);
        assert!((dl.data()[0] - 0.5 / 2.5 * (p00 - 1.0)).abs() < 1e-12);
        assert!((dl.data()[1] - 0.5 / 2.5 * (1.0 - p00)).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_rejects_bad_target() {
        let mut g = Graph::new();
        let logits = g.leaf(t2(1, 3, &[0.0; 3]), false);
        assert!(g.cross_entropy(logits, &[3], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn frozen_leaf_gets_no_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(t1(&[1.0, 2.0]), true);
        let b = g.leaf(t1(&[3.0, 4.0]), false);
        let y = g.mul(a, b).unwrap();
        let loss = g.sum_all(y).unwrap();
        g.backward(loss).unwrap();
        assert!(g.grad(a).is_some());
        assert!(g.grad(b).is_none());
    }

    #[test]
    fn frame_adj_matches_per_frame_matmul() {
        let mut g = Graph::new();
        let adj = t2(2, 2, &[0.0, 1.0, 1.0, 0.0]); // swap joints
        let x = g.leaf(
            Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            true,
        );
        let y = g.frame_adj(&adj, x).unwrap();
        assert_eq!(g.value(y).data(), &[2.0, 1.0, 4.0, 3.0]);
        let loss = g.sum_all(y).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }
}
