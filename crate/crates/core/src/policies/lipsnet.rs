//! Jacobian-normalized actor: `y = K(x) · f(x) / (‖J_f(x)‖₂ + ε)`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{jacobian_2norm, softplus_inv, Activation, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::mlp::{Mlp, MlpSpec};
use super::params::{Binding, ParamSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipsNetSpec {
    pub f_hidden: Vec<usize>,
    pub f_activation: Activation,
    pub k_hidden: Vec<usize>,
    pub k_activation: Activation,
    pub epsilon: f64,
    /// `K(x)` at initialization.
    pub k_init: f64,
    /// Weight of the `mean K(x)` penalty.
    pub k_loss_weight: f64,
}

impl Default for LipsNetSpec {
    fn default() -> Self {
        Self {
            f_hidden: vec![64, 64],
            f_activation: Activation::Elu,
            k_hidden: vec![32],
            k_activation: Activation::Tanh,
            epsilon: 1e-4,
            k_init: 1.0,
            k_loss_weight: 0.1,
        }
    }
}

impl LipsNetSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("LipsNet epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.k_init > 0.0 && self.k_init.is_finite()) {
            return Err(Error::Config(format!("LipsNet k_init must be > 0, got {}", self.k_init)));
        }
        if !(self.k_loss_weight >= 0.0) {
            return Err(Error::Config(format!("LipsNet k_loss_weight must be >= 0, got {}", self.k_loss_weight)));
        }
        Ok(())
    }
}

/// Output of a LipsNet forward pass.
pub struct LipsNetOutput<'t> {
    pub y: Var<'t>,
    /// `K(x)`, `[B, 1]`.
    pub k: Var<'t>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipsNetActor {
    f: Mlp,
    k: Mlp,
    epsilon: f64,
}

impl LipsNetActor {
    pub fn build(
        name: &str,
        spec: &LipsNetSpec,
        obs_dim: usize,
        act_dim: usize,
        params: &mut ParamSet,
        rng: &mut Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let f = Mlp::build(
            &format!("{name}.f"),
            MlpSpec::new(obs_dim, act_dim, spec.f_hidden.clone(), spec.f_activation),
            params,
            rng,
            2f64.sqrt(),
            0.01,
        )?;
        let mut k_spec = MlpSpec::new(obs_dim, 1, spec.k_hidden.clone(), spec.k_activation);
        k_spec.output_activation = Activation::Softplus;
        let k = Mlp::build(&format!("{name}.k"), k_spec, params, rng, 2f64.sqrt(), 0.0)?;
        let out = *k.layers().last().expect("nonempty");
        *params.value_mut(out.weight) = Tensor::zeros(spec.k_hidden[spec.k_hidden.len() - 1], 1);
        *params.value_mut(out.bias) = Tensor::scalar(softplus_inv(spec.k_init));
        Ok(Self { f, k, epsilon: spec.epsilon })
    }

    /// Assemble from existing networks (the `k` network must end in softplus).
    pub fn from_parts(f: Mlp, k: Mlp, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("LipsNet epsilon must be > 0, got {epsilon}")));
        }
        if k.spec().output_activation != Activation::Softplus || k.spec().output_dim != 1 {
            return Err(Error::Config("LipsNet K network must have one softplus output".into()));
        }
        Ok(Self { f, k, epsilon })
    }

    pub fn f(&self) -> &Mlp {
        &self.f
    }

    pub fn k(&self) -> &Mlp {
        &self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn forward<'t>(&self, params: &Binding<'t>, x: Var<'t>) -> Result<LipsNetOutput<'t>> {
        let x = x.ensure_tracked();
        let fx = self.f.forward(params, x)?;
        let norm = jacobian_2norm(fx, x)?;
        let k = self.k.forward(params, x)?;
        let gain = k * norm.add_scalar(self.epsilon).recip();
        Ok(LipsNetOutput { y: fx.mul_col(gain), k })
    }
}

/// `λ · mean K(x)`.
pub fn lipsnet_k_loss<'t>(k: Var<'t>, weight: f64) -> Var<'t> {
    k.mean().scale(weight)
}
