//! Adam with bias correction, plus the gradient accumulator that feeds it.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::models::BoundParam;
use crate::tensor::{Graph, ParamStore, Tensor};

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    /// First and second moment per parameter name, created on first use.
    slots: HashMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config(format!("learning rate {} out of range", lr)));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{} = {} outside [0, 1)", name, b)));
            }
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::config(format!("epsilon {} out of range", eps)));
        }
        Ok(Adam { lr, beta1, beta2, eps, step: 0, slots: HashMap::new() })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every trainable parameter that received a gradient.
    /// Parameters are visited in store order, so runs are reproducible.
    pub fn step(&mut self, store: &mut ParamStore, grads: &HashMap<String, Tensor>) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let names = store.trainable_names();
        for name in names {
            let Some(grad) = grads.get(&name) else { continue };
            let param = store.get_mut(&name).expect("trainable name exists");
            if grad.shape() != param.shape() {
                return Err(Error::shape(format!(
                    "gradient shape {:?} against parameter {:?} for {:?}",
                    grad.shape(),
                    param.shape(),
                    name
                )));
            }
            let (m, v) = self
                .slots
                .entry(name.clone())
                .or_insert_with(|| (Tensor::zeros(grad.shape()), Tensor::zeros(grad.shape())));
            let p = param.data_mut();
            let gd = grad.data();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..p.len() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gd[i];
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gd[i] * gd[i];
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Sums scaled parameter gradients across batch members. The same name can
/// be bound more than once per graph; every binding contributes.
#[derive(Default)]
pub struct GradAccum {
    sums: HashMap<String, Tensor>,
}

impl GradAccum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold one backward pass in: `sum[name] += scale * grad`.
    pub fn add(&mut self, g: &Graph, bound: &[BoundParam], scale: f64) -> Result<()> {
        for bp in bound {
            if !bp.trainable {
                continue;
            }
            let Some(grad) = g.grad(bp.var) else { continue };
            match self.sums.get_mut(&bp.name) {
                Some(acc) => {
                    if acc.shape() != grad.shape() {
                        return Err(Error::shape(format!(
                            "gradient shape changed across bindings of {:?}",
                            bp.name
                        )));
                    }
                    for (a, &b) in acc.data_mut().iter_mut().zip(grad.data()) {
                        *a += scale * b;
                    }
                }
                None => {
                    let scaled = Tensor::new(
                        grad.shape().to_vec(),
                        grad.data().iter().map(|&v| scale * v).collect(),
                    )?;
                    self.sums.insert(bp.name.clone(), scaled);
                }
            }
        }
        Ok(())
    }

    pub fn into_grads(self) -> HashMap<String, Tensor> {
        self.sums
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, data: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let n = data.len();
        s.insert(name, Tensor::new(vec![n], data).unwrap(), true).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters_alone() {
        let mut store = store_with("w", vec![1.5, -2.0]);
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8).unwrap();
        let mut grads = HashMap::new();
        grads.insert("w".to_string(), Tensor::zeros(&[2]));
        adam.step(&mut store, &grads).unwrap();
        assert_eq!(store.get("w").unwrap().data(), &[1.5, -2.0]);
        // absent gradient also leaves the parameter alone
        adam.step(&mut store, &HashMap::new()).unwrap();
        assert_eq!(store.get("w").unwrap().data(), &[1.5, -2.0]);
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut store = store_with("w", vec![1.0, 1.0, 1.0]);
        let lr = 1e-3;
        let mut adam = Adam::new(lr, 0.9, 0.999, 1e-8).unwrap();
        let mut grads = HashMap::new();
        grads.insert("w".to_string(), Tensor::new(vec![3], vec![3.7, -0.02, 250.0]).unwrap());
        adam.step(&mut store, &grads).unwrap();
        let w = store.get("w").unwrap().data();
        // bias-corrected first step: lr * g / (|g| + eps), essentially sign
        assert!((w[0] - (1.0 - lr)).abs() < 1e-9);
        assert!((w[1] - (1.0 + lr)).abs() < 1e-9);
        assert!((w[2] - (1.0 - lr)).abs() < 1e-9);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // minimize 0.5 * |w - c|^2; gradient is w - c
        let target = [3.0, -1.25, 0.5];
        let mut store = store_with("w", vec![0.0, 0.0, 0.0]);
        let mut adam = Adam::new(0.05, 0.9, 0.999, 1e-8).unwrap();
        let mut converged_at = None;
        for step in 1..=2000 {
            let grad: Vec<f64> = store
                .get("w")
                .unwrap()
                .data()
                .iter()
                .zip(&target)
                .map(|(w, c)| w - c)
                .collect();
            let worst = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            if worst < 1e-6 {
                converged_at = Some(step);
                break;
            }
            let mut grads = HashMap::new();
            grads.insert("w".to_string(), Tensor::new(vec![3], grad).unwrap());
            adam.step(&mut store, &grads).unwrap();
        }
        assert!(converged_at.is_some(), "still far from the bowl bottom after 2000 steps");
    }

    #[test]
    fn update_order_is_reproducible() {
        let run = || {
            let mut store = ParamStore::new();
            store.insert("b", Tensor::full(&[2], 1.0), true).unwrap();
            store.insert("a", Tensor::full(&[2], 1.0), true).unwrap();
            let mut adam = Adam::new(0.01, 0.9, 0.999, 1e-8).unwrap();
            for step in 0..5 {
                let mut grads = HashMap::new();
                let g = 0.3 + step as f64 * 0.1;
                grads.insert("a".to_string(), Tensor::full(&[2], g));
                grads.insert("b".to_string(), Tensor::full(&[2], -g));
                adam.step(&mut store, &grads).unwrap();
            }
            (store.get("a").unwrap().data().to_vec(), store.get("b").unwrap().data().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation() {
        assert!(Adam::new(0.0, 0.9, 0.999, 1e-8).is_err());
        assert!(Adam::new(0.1, 1.0, 0.999, 1e-8).is_err());
        assert!(Adam::new(0.1, 0.9, -0.1, 1e-8).is_err());
        assert!(Adam::new(0.1, 0.9, 0.999, 0.0).is_err());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut store = store_with("w", vec![1.0, 2.0]);
        let mut adam = Adam::new(0.1, 0.9, 0.999, 1e-8).unwrap();
        let mut grads = HashMap::new();
        grads.insert("w".to_string(), Tensor::zeros(&[3]));
        assert!(adam.step(&mut store, &grads).is_err());
    }

    #[test]
    fn accumulator_scales_and_merges_repeated_bindings() {
        use crate::tensor::Graph;
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new(vec![2], vec![0.5, -0.5]).unwrap(), true).unwrap();
        store.insert("frozen", Tensor::full(&[2], 3.0), false).unwrap();
        let mut g = Graph::new();
        let mut bind = crate::models::Bind::new(&store, true);
        let a = bind.var(&mut g, "w").unwrap();
        let b = bind.var(&mut g, "w").unwrap();
        let f = bind.var(&mut g, "frozen").unwrap();
        let ab = g.mul(a, b).unwrap();
        let fa = g.mul(f, ab).unwrap();
        let loss = g.sum_all(fa).unwrap();
        g.backward(loss).unwrap();
        let mut acc = GradAccum::new();
        acc.add(&g, &bind.bound, 0.5).unwrap();
        let grads = acc.into_grads();
        // d/dw of 3 * w * w summed over both bindings: each leaf sees 3 * w,
        // the accumulator adds them and scales by 0.5 -> 3 * w
        let got = grads.get("w").unwrap().data();
        assert!((got[0] - 3.0 * 0.5).abs() < 1e-12);
        assert!((got[1] - 3.0 * -0.5).abs() < 1e-12);
        assert!(!grads.contains_key("frozen"));
    }
}
