//! Layer-wise Lipschitz bounds with a learnable constant per layer.
//!
//! Layer `i` uses `Ŵ = normalize(W, softplus(c_i))`, which rescales each
//! output unit's incoming weights so their absolute sum is at most
//! `softplus(c_i)`. That bounds the layer's ∞-norm Lipschitz constant by
//! `softplus(c_i)`, and with 1-Lipschitz activations the network's by
//! `∏ softplus(c_i)`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{softplus, softplus_inv, Activation, Var};
use crate::error::Result;
use crate::tensor::Tensor;

use super::mlp::Mlp;
use super::params::{Binding, ParamSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiuLipschitzSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Initial per-layer bound, `softplus(c_init)`.
    pub initial_bound: f64,
    /// Weight of the `∏ softplus(c_i)` penalty.
    pub c_loss_weight: f64,
}

impl Default for LiuLipschitzSpec {
    fn default() -> Self {
        Self { hidden: vec![64, 64], activation: Activation::Tanh, initial_bound: 10.0, c_loss_weight: 1e-6 }
    }
}

/// Scale every column `j` of `W [fan_in, fan_out]` by
/// `min(1, bound / Σ_i |W_ij|)`.
pub fn liu_normalize_layer(w: &Tensor, bound: f64) -> Tensor {
    let (rows, cols) = (w.rows(), w.cols());
    let mut out = w.clone();
    for j in 0..cols {
        let sum: f64 = (0..rows).map(|i| w.at(i, j).abs()).sum();
        if sum > bound {
            let s = bound / sum;
            for i in 0..rows {
                out.data_mut()[i * cols + j] *= s;
            }
        }
    }
    out
}

/// Differentiable form of [`liu_normalize_layer`] with `bound = softplus(c)`.
pub fn liu_normalize<'t>(w: Var<'t>, c: Var<'t>) -> Result<Var<'t>> {
    let (rows, cols) = (w.rows(), w.cols());
    let bound = c.softplus().expand(1, cols);
    let sums = w.abs().sum_rows();
    let ones = w.tape().constant(Tensor::filled(1, cols, 1.0));
    // A zero column has nothing to scale; recip(0) = 0 would zero the factor.
    let ratio = bound * sums.recip();
    let zero_cols = sums.value().data().iter().map(|&s| if s == 0.0 { 1.0 } else { 0.0 }).collect::<Vec<_>>();
    let scale = ratio.try_add(w.tape().constant(Tensor::row(&zero_cols)))?.try_minimum(ones)?;
    Ok(w * scale.expand_rows(rows))
}

/// `λ · ∏ softplus(c_i)`.
pub fn liu_loss<'t>(c: &[Var<'t>], weight: f64) -> Var<'t> {
    let mut it = c.iter().map(|ci| ci.softplus());
    let first = it.next().expect("at least one layer");
    it.fold(first, |acc, s| acc * s).scale(weight)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiuActor {
    mlp: Mlp,
    c: Vec<usize>,
}

impl LiuActor {
    /// Adds one `c_i` per layer of `mlp` to `params`.
    pub fn new(mlp: Mlp, spec: &LiuLipschitzSpec, params: &mut ParamSet) -> Self {
        let c_init = softplus_inv(spec.initial_bound);
        let c = (0..mlp.layers().len())
            .map(|i| params.push(format!("{}.l{i}.c", mlp.name()), Tensor::scalar(c_init)))
            .collect();
        Self { mlp, c }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn c_indices(&self) -> &[usize] {
        &self.c
    }

    /// Current per-layer bounds `softplus(c_i)`.
    pub fn bounds(&self, params: &ParamSet) -> Vec<f64> {
        self.c.iter().map(|&i| softplus(params.value(i).item())).collect()
    }

    pub fn c_vars<'t>(&self, params: &Binding<'t>) -> Vec<Var<'t>> {
        self.c.iter().map(|&i| params.get(i)).collect()
    }

    pub fn forward<'t>(&self, params: &Binding<'t>, x: Var<'t>) -> Result<Var<'t>> {
        self.mlp.forward_with(params, x, |i, w| liu_normalize(w, params.get(self.c[i])))
    }
}
