//! Spectral normalization of the actor's output layer.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Var};
use crate::error::Result;
use crate::tensor::Tensor;

use super::mlp::Mlp;
use super::params::{Binding, ParamSet};

/// Power iterations used when preparing a checkpoint (at least this many,
/// continued until the estimate settles).
pub const CHECKPOINT_POWER_ITERS: usize = 20;
const CONVERGENCE_TOL: f64 = 1e-12;
const MAX_POWER_ITERS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSnSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Target spectral norm of the output layer.
    pub delta: f64,
}

impl Default for LocalSnSpec {
    fn default() -> Self {
        Self { hidden: vec![64, 64], activation: Activation::Tanh, delta: 1.0 }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// One power-iteration step on `W [rows, cols]` with right vector `u`
/// (length `cols`). Returns the left vector `v` and the estimate `vᵀ W u`
/// taken with the updated `u`.
pub fn power_step(w: &Tensor, u: &mut [f64]) -> (Vec<f64>, f64) {
    let (rows, cols) = (w.rows(), w.cols());
    let d = w.data();
    let mut v: Vec<f64> = (0..rows).map(|i| (0..cols).map(|j| d[i * cols + j] * u[j]).sum()).collect();
    normalize(&mut v);
    for (j, uj) in u.iter_mut().enumerate() {
        *uj = (0..rows).map(|i| d[i * cols + j] * v[i]).sum();
    }
    let sigma = normalize(u);
    (v, sigma)
}

/// Left vector for the current `u` and the estimate `σ = vᵀ W u`.
pub fn sigma_estimate(w: &Tensor, u: &[f64]) -> (Vec<f64>, f64) {
    let (rows, cols) = (w.rows(), w.cols());
    let d = w.data();
    let mut wu: Vec<f64> = (0..rows).map(|i| (0..cols).map(|j| d[i * cols + j] * u[j]).sum()).collect();
    let sigma = normalize(&mut wu);
    (wu, sigma)
}

/// Run at least `min_iters` steps and continue until the estimate changes
/// by less than a relative 1e-12.
pub fn converge(w: &Tensor, u: &mut [f64], min_iters: usize) -> f64 {
    let mut prev = f64::NAN;
    for i in 0..MAX_POWER_ITERS {
        let (_, s) = power_step(w, u);
        if s == 0.0 {
            return 0.0;
        }
        if i + 1 >= min_iters && ((s - prev).abs() <= CONVERGENCE_TOL * s) {
            break;
        }
        prev = s;
    }
    sigma_estimate(w, u).1
}

/// `δ · W / σ(W)` with σ from a converged power iteration started at `u`.
/// A zero matrix is returned unchanged.
pub fn spectral_normalize(w: &Tensor, delta: f64, u: &mut [f64]) -> Tensor {
    let sigma = converge(w, u, CHECKPOINT_POWER_ITERS);
    if sigma == 0.0 {
        return w.clone();
    }
    w.map(|x| delta * x / sigma)
}

/// Initial power-iteration vector: the all-ones direction.
pub fn initial_vector(cols: usize) -> Vec<f64> {
    vec![1.0 / (cols as f64).sqrt(); cols]
}

/// Plain MLP whose output-layer weight is divided by its estimated spectral
/// norm on every forward pass. The estimate uses a persistent vector that
/// advances one power step per training update.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralActor {
    mlp: Mlp,
    delta: f64,
    u: Vec<f64>,
}

impl SpectralActor {
    pub fn new(mlp: Mlp, delta: f64) -> Self {
        let cols = mlp.spec().output_dim;
        Self { mlp, delta, u: initial_vector(cols) }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn set_u(&mut self, u: Vec<f64>) {
        assert_eq!(u.len(), self.u.len());
        self.u = u;
    }

    fn output_weight<'p>(&self, params: &'p ParamSet) -> &'p Tensor {
        params.value(self.mlp.layers().last().expect("nonempty").weight)
    }

    /// One power step (called once per gradient update).
    pub fn advance(&mut self, params: &ParamSet) {
        let w = self.output_weight(params).clone();
        power_step(&w, &mut self.u);
    }

    /// Converge the vector so `σ(W_SN) = δ` to power-iteration precision.
    pub fn converge(&mut self, params: &ParamSet) -> f64 {
        let w = self.output_weight(params).clone();
        converge(&w, &mut self.u, CHECKPOINT_POWER_ITERS)
    }

    /// Output weight after normalization, as a plain tensor.
    pub fn normalized_output_weight(&self, params: &ParamSet) -> Tensor {
        let w = self.output_weight(params);
        let (_, sigma) = sigma_estimate(w, &self.u);
        if sigma == 0.0 {
            w.clone()
        } else {
            w.map(|x| self.delta * x / sigma)
        }
    }

    pub fn forward<'t>(&self, params: &Binding<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let last = self.mlp.layers().len() - 1;
        self.mlp.forward_with(params, x, |i, w| {
            if i != last {
                return Ok(w);
            }
            let wv = w.value();
            let (v, sigma) = sigma_estimate(&wv, &self.u);
            if sigma == 0.0 {
                return Ok(w);
            }
            let tape = w.tape();
            let v = tape.constant(Tensor::row(&v));
            let u = tape.constant(Tensor::column(&self.u));
            // σ = vᵀ W u stays on the tape so its dependence on W is trained through.
            let sigma = v.try_matmul(w)?.try_matmul(u)?;
            Ok(w * sigma.recip().scale(self.delta).expand(wv.rows(), wv.cols()))
        })
    }
}
