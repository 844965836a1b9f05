//! Skeleton topologies and their normalized adjacency matrices.
//!
//! Two fixed graphs cover the pipeline: a 27-joint upper body (nose,
//! shoulders, arms, and both hands at two keypoints per finger) and a
//! 21-joint dominant hand (wrist plus four keypoints per finger). Spatial
//! aggregation always uses `D^-1/2 (A + I) D^-1/2`, so every row touches a
//! joint's neighbours and itself with symmetric weights.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Body joint indices. Hands hang off the wrists at two keypoints per
/// finger, ordered thumb to pinky as (base, tip) pairs.
pub mod body {
    pub const NOSE: usize = 0;
    pub const L_SHOULDER: usize = 1;
    pub const R_SHOULDER: usize = 2;
    pub const L_ELBOW: usize = 3;
    pub const R_ELBOW: usize = 4;
    pub const L_WRIST: usize = 5;
    pub const R_WRIST: usize = 6;
    /// First of ten left-hand slots (thumb base).
    pub const L_HAND: usize = 7;
    /// First of ten right-hand slots (thumb base).
    pub const R_HAND: usize = 17;
    pub const JOINTS: usize = 27;
}

/// Hand joint indices for the 21-joint graph: wrist then four joints per
/// finger (base to tip), thumb to pinky.
pub mod hand {
    pub const WRIST: usize = 0;
    pub const JOINTS: usize = 21;

    /// First joint of finger `f` (0 = thumb .. 4 = pinky).
    pub const fn finger_base(f: usize) -> usize {
        1 + 4 * f
    }
}

/// Left-right joint swap used by horizontal flips.
pub fn body_mirror_map() -> [usize; body::JOINTS] {
    let mut map = [0usize; body::JOINTS];
    map[body::NOSE] = body::NOSE;
    let pairs = [
        (body::L_SHOULDER, body::R_SHOULDER),
        (body::L_ELBOW, body::R_ELBOW),
        (body::L_WRIST, body::R_WRIST),
    ];
    for (l, r) in pairs {
        map[l] = r;
        map[r] = l;
    }
    for slot in 0..10 {
        map[body::L_HAND + slot] = body::R_HAND + slot;
        map[body::R_HAND + slot] = body::L_HAND + slot;
    }
    map
}

/// Undirected joint graph with a precomputed normalized adjacency.
#[derive(Debug, Clone)]
pub struct JointGraph {
    joints: usize,
    edges: Vec<(usize, usize)>,
    a_hat: Tensor,
}

impl JointGraph {
    /// Build from an undirected edge list. Self-loops are implicit in the
    /// normalization and rejected here, as are duplicate edges.
    pub fn new(joints: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if joints == 0 {
            return Err(Error::config("joint graph wants at least one joint"));
        }
        let mut seen = vec![false; joints * joints];
        for &(a, b) in &edges {
            if a >= joints || b >= joints {
                return Err(Error::config(format!(
                    "edge ({}, {}) out of range for {} joints",
                    a, b, joints
                )));
            }
            if a == b {
                return Err(Error::config(format!("self-loop edge on joint {}", a)));
            }
            if seen[a * joints + b] {
                return Err(Error::config(format!("duplicate edge ({}, {})", a, b)));
            }
            seen[a * joints + b] = true;
            seen[b * joints + a] = true;
        }

        // A + I, then symmetric degree normalization
        let mut adj = vec![0.0; joints * joints];
        for i in 0..joints {
            adj[i * joints + i] = 1.0;
        }
        for &(a, b) in &edges {
            adj[a * joints + b] = 1.0;
            adj[b * joints + a] = 1.0;
        }
        let mut inv_sqrt_deg = vec![0.0; joints];
        for i in 0..joints {
            let deg: f64 = adj[i * joints..(i + 1) * joints].iter().sum();
            inv_sqrt_deg[i] = 1.0 / deg.sqrt();
        }
        for i in 0..joints {
            for j in 0..joints {
                adj[i * joints + j] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
            }
        }

        Ok(JointGraph {
            joints,
            edges,
            a_hat: Tensor::new(vec![joints, joints], adj)?,
        })
    }

    /// 27-joint upper body: shoulder girdle triangle, arms, and a two-slot
    /// chain per finger from each wrist.
    pub fn body() -> Self {
        use body::*;
        let mut edges = vec![
            (NOSE, L_SHOULDER),
            (NOSE, R_SHOULDER),
            (L_SHOULDER, R_SHOULDER),
            (L_SHOULDER, L_ELBOW),
            (R_SHOULDER, R_ELBOW),
            (L_ELBOW, L_WRIST),
            (R_ELBOW, R_WRIST),
        ];
        for f in 0..5 {
            let base = L_HAND + 2 * f;
            edges.push((L_WRIST, base));
            edges.push((base, base + 1));
            let base = R_HAND + 2 * f;
            edges.push((R_WRIST, base));
            edges.push((base, base + 1));
        }
        Self::new(JOINTS, edges).expect("fixed body topology is valid")
    }

    /// 21-joint hand: wrist to each finger base, then a chain of four joints
    /// per finger.
    pub fn hand() -> Self {
        use hand::*;
        let mut edges = Vec::with_capacity(20);
        for f in 0..5 {
            let base = finger_base(f);
            edges.push((WRIST, base));
            edges.push((base, base + 1));
            edges.push((base + 1, base + 2));
            edges.push((base + 2, base + 3));
        }
        Self::new(JOINTS, edges).expect("fixed hand topology is valid")
    }

    pub fn num_joints(&self) -> usize {
        self.joints
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `D^-1/2 (A + I) D^-1/2`, shape `[joints, joints]`.
    pub fn a_hat(&self) -> &Tensor {
        &self.a_hat
    }
}
