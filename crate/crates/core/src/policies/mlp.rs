use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::params::{Binding, ParamSet};

fn linear() -> Activation {
    Activation::Linear
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default = "linear")]
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, output_dim: usize, hidden: Vec<usize>, activation: Activation) -> Self {
        Self { input_dim, output_dim, hidden, activation, output_activation: Activation::Linear }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::Config("an MLP needs at least one hidden layer".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!("MLP widths must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Parameter indices of one affine layer. Weights are `[fan_in, fan_out]`
/// so a batch `x [B, fan_in]` maps as `x W + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layer {
    pub weight: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    name: String,
    spec: MlpSpec,
    layers: Vec<Layer>,
}

/// Orthogonal `[rows, cols]` matrix scaled by `gain`.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Tensor {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(tall, short, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    // Sign fix makes the draw uniform over the orthogonal group.
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows >= cols { q } else { q.transpose() };
    Tensor::matrix(rows, cols, (0..rows * cols).map(|i| gain * q[(i / cols, i % cols)]).collect())
}

impl Mlp {
    /// Orthogonal weights (`hidden_gain` for hidden layers, `output_gain` for
    /// the last), zero biases.
    pub fn build(
        name: &str,
        spec: MlpSpec,
        params: &mut ParamSet,
        rng: &mut Rng,
        hidden_gain: f64,
        output_gain: f64,
    ) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        let last = dims.len() - 1;
        let layers = dims
            .iter()
            .enumerate()
            .map(|(i, &(fan_in, fan_out))| {
                let gain = if i == last { output_gain } else { hidden_gain };
                Layer {
                    weight: params.push(format!("{name}.l{i}.weight"), orthogonal(fan_in, fan_out, gain, rng)),
                    bias: params.push(format!("{name}.l{i}.bias"), Tensor::zeros(1, fan_out)),
                }
            })
            .collect();
        Ok(Self { name: name.to_string(), spec, layers })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Fault on the first layer holding a non-finite parameter.
    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        for (i, l) in self.layers.iter().enumerate() {
            if !params.value(l.weight).is_finite() || !params.value(l.bias).is_finite() {
                return Err(Error::BadParameter { network: self.name.clone(), layer: i });
            }
        }
        Ok(())
    }

    pub fn forward<'t>(&self, params: &Binding<'t>, x: Var<'t>) -> Result<Var<'t>> {
        self.forward_with(params, x, |_, w| Ok(w))
    }

    /// Forward pass with each weight matrix passed through `weight(layer, W)`
    /// first; this is where the Lipschitz-constrained variants hook in.
    pub fn forward_with<'t>(
        &self,
        params: &Binding<'t>,
        x: Var<'t>,
        mut weight: impl FnMut(usize, Var<'t>) -> Result<Var<'t>>,
    ) -> Result<Var<'t>> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::Input(format!(
                "{} expects {} input features, got {}",
                self.name,
                self.spec.input_dim,
                x.cols()
            )));
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            let w = weight(i, params.get(l.weight))?;
            h = h.try_matmul(w)?.add_row(params.get(l.bias));
            h = h.activation(if i == last { self.spec.output_activation } else { self.spec.activation });
        }
        Ok(h)
    }
}
