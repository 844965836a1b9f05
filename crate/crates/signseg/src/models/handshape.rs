//! Handshape recognizer: three graph-convolution layers over the 21-joint
//! hand, pooled to one feature row per frame.
//!
//! Every operation is frame-local (no temporal mixing, no batch norm), so a
//! stack of independent hand crops can ride through the time axis as a
//! batch, and frames of a sequence are classified independently.

use rand_chacha::ChaCha8Rng;

use super::{uniform_init, Bind};
use crate::error::{Error, Result};
use crate::graphs::JointGraph;
use crate::tensor::{Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone)]
pub struct HandshapeConfig {
    pub in_channels: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl Default for HandshapeConfig {
    fn default() -> Self {
        HandshapeConfig {
            in_channels: 2,
            hidden: vec![64, 128, 256],
            num_classes: 87,
        }
    }
}

impl HandshapeConfig {
    pub fn feature_dim(&self) -> usize {
        *self.hidden.last().expect("at least one layer")
    }
}

pub struct HandshapeForward {
    /// `[t, feature_dim]` pooled hand features.
    pub features: Var,
    /// `[t, num_classes]` per-frame logits.
    pub logits: Var,
}

pub struct HandshapeNetwork {
    pub cfg: HandshapeConfig,
    graph: JointGraph,
}

impl HandshapeNetwork {
    pub fn new(cfg: HandshapeConfig, graph: JointGraph) -> Result<Self> {
        if cfg.hidden.is_empty() || cfg.in_channels == 0 || cfg.num_classes == 0 {
            return Err(Error::config("handshape network wants layers, channels, classes"));
        }
        Ok(HandshapeNetwork { cfg, graph })
    }

    pub fn joints(&self) -> usize {
        self.graph.num_joints()
    }

    /// Create all `hand.*` parameters in fixed order.
    pub fn init_params(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        let mut c_in = self.cfg.in_channels;
        for (i, &c_out) in self.cfg.hidden.iter().enumerate() {
            store.insert(
                &format!("hand.gcn{}.w", i + 1),
                uniform_init(rng, vec![c_in, c_out], c_in),
                true,
            )?;
            c_in = c_out;
        }
        store.insert(
            "hand.out.w",
            uniform_init(rng, vec![c_in, self.cfg.num_classes], c_in),
            true,
        )?;
        store.insert(
            "hand.out.b",
            Tensor::zeros(&[1, self.cfg.num_classes]),
            true,
        )?;
        Ok(())
    }

    /// `[t, joints, in_channels]` to `[t, feature_dim]` joint-pooled frame
    /// features.
    pub fn features(&self, g: &mut Graph, bind: &mut Bind, x: Var) -> Result<Var> {
        let shape = g.value(x).shape().to_vec();
        if shape.len() != 3
            || shape[1] != self.graph.num_joints()
            || shape[2] != self.cfg.in_channels
        {
            return Err(Error::shape(format!(
                "handshape network wants [t, {}, {}], got {:?}",
                self.graph.num_joints(),
                self.cfg.in_channels,
                shape
            )));
        }
        let mut h = x;
        for i in 0..self.cfg.hidden.len() {
            let w = bind.var(g, &format!("hand.gcn{}.w", i + 1))?;
            let agg = g.frame_adj(self.graph.a_hat(), h)?;
            let mixed = g.matmul(agg, w)?;
            h = g.relu(mixed)?;
        }
        g.reduce_mean(h, 1)
    }

    /// Linear classifier over `[n, feature_dim]` rows.
    pub fn classify(&self, g: &mut Graph, bind: &mut Bind, rows: Var) -> Result<Var> {
        let w = bind.var(g, "hand.out.w")?;
        let b = bind.var(g, "hand.out.b")?;
        let proj = g.matmul(rows, w)?;
        g.add(proj, b)
    }

    /// `[t, joints, in_channels]` to per-frame features and logits.
    pub fn forward(&self, g: &mut Graph, bind: &mut Bind, x: Var) -> Result<HandshapeForward> {
        let features = self.features(g, bind, x)?;
        let logits = self.classify(g, bind, features)?;
        Ok(HandshapeForward { features, logits })
    }

    /// One logit row for a whole segment: frame features mean-pooled over
    /// time, then the classifier. Used when the class is a property of the
    /// clip rather than of single frames.
    pub fn forward_segment(&self, g: &mut Graph, bind: &mut Bind, x: Var) -> Result<Var> {
        let features = self.features(g, bind, x)?;
        let mean = g.reduce_mean(features, 0)?;
        let row = g.reshape(mean, &[1, self.cfg.feature_dim()])?;
        self.classify(g, bind, row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn net() -> HandshapeNetwork {
        HandshapeNetwork::new(
            HandshapeConfig {
                in_channels: 2,
                hidden: vec![8, 16],
                num_classes: 5,
            },
            JointGraph::hand(),
        )
        .unwrap()
    }

    #[test]
    fn forward_shapes() {
        let n = net();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        n.init_params(&mut store, &mut rng).unwrap();
        let mut g = Graph::new();
        let mut bind = Bind::new(&store, true);
        let x = g.leaf(Tensor::from_fn(&[4, 21, 2], |i| (i as f64 * 0.11).sin()), false);
        let out = n.forward(&mut g, &mut bind, x).unwrap();
        assert_eq!(g.value(out.features).shape(), &[4, 16]);
        assert_eq!(g.value(out.logits).shape(), &[4, 5]);
        assert!(bind.bn_stats.is_empty());
    }

    #[test]
    fn frames_are_independent() {
        // running two frames stacked must equal running them separately
        let n = net();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        n.init_params(&mut store, &mut rng).unwrap();

        let frame = |offset: f64| Tensor::from_fn(&[1, 21, 2], |i| (i as f64 * 0.2 + offset).cos());
        let run = |x: Tensor| -> Vec<f64> {
            let mut g = Graph::new();
            let mut bind = Bind::new(&store, true);
            let xv = g.leaf(x, false);
            let out = n.forward(&mut g, &mut bind, xv).unwrap();
            g.value(out.logits).data().to_vec()
        };

        let a = run(frame(0.0));
        let b = run(frame(1.0));
        let mut stacked_data = frame(0.0).into_data();
        stacked_data.extend(frame(1.0).into_data());
        let stacked = run(Tensor::new(vec![2, 21, 2], stacked_data).unwrap());
        for (i, want) in a.iter().chain(b.iter()).enumerate() {
            assert!((stacked[i] - want).abs() < 1e-12, "frame stacking changed logits");
        }
    }

    #[test]
    fn segment_logits_classify_the_mean_feature() {
        let n = net();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        n.init_params(&mut store, &mut rng).unwrap();
        let x = Tensor::from_fn(&[5, 21, 2], |i| (i as f64 * 0.13).sin());

        let mut g = Graph::new();
        let mut bind = Bind::new(&store, false);
        let xv = g.leaf(x.clone(), false);
        let seg_logits = n.forward_segment(&mut g, &mut bind, xv).unwrap();
        assert_eq!(g.value(seg_logits).shape(), &[1, 5]);

        // oracle: mean the per-frame features, then classify that row
        let mut g2 = Graph::new();
        let mut bind2 = Bind::new(&store, false);
        let xv2 = g2.leaf(x, false);
        let out = n.forward(&mut g2, &mut bind2, xv2).unwrap();
        let feats = g2.value(out.features).clone();
        let mean = Tensor::from_fn(&[1, 16], |c| {
            (0..5).map(|t| feats.data()[t * 16 + c]).sum::<f64>() / 5.0
        });
        let mv = g2.leaf(mean, false);
        let want = n.classify(&mut g2, &mut bind2, mv).unwrap();
        for (a, b) in g.value(seg_logits).data().iter().zip(g2.value(want).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_flow_to_all_parameters() {
        let n = net();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        n.init_params(&mut store, &mut rng).unwrap();
        let mut g = Graph::new();
        let mut bind = Bind::new(&store, true);
        let x = g.leaf(Tensor::from_fn(&[3, 21, 2], |i| (i as f64 * 0.31).sin()), false);
        let out = n.forward(&mut g, &mut bind, x).unwrap();
        let loss = g
            .cross_entropy(out.logits, &[0, 3, 2], &[1.0; 5])
            .unwrap();
        g.backward(loss).unwrap();
        for bp in &bind.bound {
            let grad = g.grad(bp.var).unwrap_or_else(|| panic!("no grad for {}", bp.name));
            assert!(grad.all_finite());
            assert!(
                grad.data().iter().any(|&v| v != 0.0),
                "all-zero grad for {}",
                bp.name
            );
        }
    }
}
