//! Central finite-difference verification of analytic gradients.
//!
//! This is the independent oracle for the whole differentiation stack: a
//! scalar-valued builder is evaluated twice per perturbed element and the
//! two-sided difference quotient is compared against the tape gradient.

use crate::error::Result;
use crate::nn::graph::{Graph, Var};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Relative error with an absolute floor so near-zero gradients are compared
/// absolutely rather than amplifying finite-difference noise.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Check `d loss / d inputs` for a scalar-valued graph builder.
///
/// `build` must be a pure function of its leaf inputs. Every `stride`-th
/// element of every input is perturbed by `+-step` (set `stride = 1` to check
/// all of them).
pub fn finite_diff_check<S: Scalar>(
    inputs: &[Tensor<S>],
    step: f64,
    stride: usize,
    build: impl Fn(&mut Graph<S>, &[Var]) -> Result<Var>,
) -> Result<GradCheckReport> {
    let stride = stride.max(1);

    // Analytic pass.
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = build(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<S>> = vars
        .iter()
        .map(|&v| match g.grad(v) {
            Some(gr) => gr.to_vec(),
            None => vec![S::zero(); g.numel(v)],
        })
        .collect();

    let eval = |perturbed: &[Tensor<S>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.scalar_value(loss).to64())
    };

    let mut work: Vec<Tensor<S>> = inputs.to_vec();
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for i in 0..inputs.len() {
        for j in (0..inputs[i].numel()).step_by(stride) {
            let orig = inputs[i].data()[j].to64();
            work[i].data_mut()[j] = S::from64(orig + step);
            let up = eval(&work)?;
            work[i].data_mut()[j] = S::from64(orig - step);
            let down = eval(&work)?;
            work[i].data_mut()[j] = S::from64(orig);
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[i][j].to64();
            max_rel = max_rel.max(rel_err(a, numeric));
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        checked,
    })
}

/// Uniformly random tensor in [-1, 1], reproducible from the rng.
pub fn random_tensor<S: Scalar>(shape: &[usize], rng: &mut impl rand::Rng) -> Tensor<S> {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = S::from64(rng.gen_range(-1.0..1.0));
    }
    t
}
