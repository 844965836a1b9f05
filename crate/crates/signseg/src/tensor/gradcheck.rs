//! Finite-difference verification of recorded gradients.
//!
//! The checker rebuilds the forward pass from scratch for every probe, so the
//! closure must construct the same computation whenever it is handed the same
//! parameter values. A bitwise comparison of two forward passes guards against
//! closures that fail that contract.

use super::graph::{Graph, Var};
use super::Tensor;
use crate::error::Result;

/// Central-difference step.
pub const DEFAULT_FD_EPS: f64 = 1e-5;
/// Acceptance threshold on the relative error.
pub const DEFAULT_FD_TOLERANCE: f64 = 1e-4;

/// Outcome of one [`grad_check`] run.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Two identical forward passes produced bitwise-identical losses.
    pub deterministic: bool,
    /// Largest relative error over all probed elements.
    pub worst: f64,
    /// Largest relative error per parameter tensor, in input order.
    pub per_param: Vec<f64>,
    /// Number of probed elements.
    pub probes: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.deterministic && self.worst < tolerance
    }
}

/// Relative error between an analytic and a numeric derivative, with the
/// denominator floored at 1 so tiny gradients compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1.0_f64.max(analytic.abs()).max(numeric.abs())
}

fn forward<F>(build: &F, params: &[Tensor]) -> Result<(Graph, Vec<Var>, Var)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone(), true)).collect();
    let loss = build(&mut g, &vars)?;
    Ok((g, vars, loss))
}

/// Compare recorded gradients of `build`'s scalar output against central
/// differences over every element of every parameter (subsampled evenly when
/// a parameter exceeds `probe_limit`).
pub fn grad_check<F>(
    build: F,
    params: &[Tensor],
    eps: f64,
    probe_limit: Option<usize>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let (g1, _, l1) = forward(&build, params)?;
    let (g2, _, l2) = forward(&build, params)?;
    let deterministic = g1.value(l1).item().to_bits() == g2.value(l2).item().to_bits();

    let (mut g, vars, loss) = forward(&build, params)?;
    g.backward(loss)?;
    let grads: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| {
            g.grad(*v)
                .map(|t| t.data().to_vec())
                .unwrap_or_else(|| vec![0.0; g.value(*v).numel()])
        })
        .collect();

    let mut worst = 0.0_f64;
    let mut per_param = Vec::with_capacity(params.len());
    let mut probes = 0;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        let n = param.numel();
        let step = match probe_limit {
            Some(limit) if n > limit => n.div_ceil(limit),
            _ => 1,
        };
        let mut param_worst = 0.0_f64;
        let mut j = 0;
        while j < n {
            let orig = param.data()[j];
            work[pi].data_mut()[j] = orig + eps;
            let (gp, _, lp) = forward(&build, &work)?;
            let plus = gp.value(lp).item();
            work[pi].data_mut()[j] = orig - eps;
            let (gm, _, lm) = forward(&build, &work)?;
            let minus = gm.value(lm).item();
            work[pi].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(grads[pi][j], numeric);
            param_worst = param_worst.max(err);
            probes += 1;
            j += step;
        }
        worst = worst.max(param_worst);
        per_param.push(param_worst);
    }

    Ok(GradCheckReport {
        deterministic,
        worst,
        per_param,
        probes,
    })
}

/// Central-difference check of a scalar function's derivative at each of the
/// given points. Returns the largest relative error.
pub fn grad_check_scalar_fn<F, D>(f: F, df: D, points: &[f64], eps: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut worst = 0.0_f64;
    for &x in points {
        let numeric = (f(x + eps) - f(x - eps)) / (2.0 * eps);
        worst = worst.max(relative_error(df(x), numeric));
    }
    worst
}
