//! Smoothness regularizers added to the RL loss, and the method grammar that
//! pairs them with actor architectures.
//!
//! `L = L_RL + Σ active regularizers`. Temporal and spatial action
//! regularization (CAPS) and interpolated-state regularization of actor and
//! critic (L2C2) act through the loss; the Liu-Lipschitz and LipsNet penalties
//! come with their architectures.

mod method;

#[cfg(test)]
mod tests;

use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::policies::{lipsnet_k_loss, liu_loss, ActorCritic, ActorNet, ArchSpec, Binding};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub use method::{Architecture, MethodSpec, Regularizer, METHOD_GRAMMAR, METHOD_NAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapsConfig {
    /// Std of the Gaussian state perturbation for the spatial term.
    pub sigma: f64,
    pub lambda_t: f64,
    pub lambda_s: f64,
}

impl Default for CapsConfig {
    fn default() -> Self {
        Self { sigma: 0.1, lambda_t: 0.1, lambda_s: 0.5 }
    }
}

impl CapsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("caps.sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.lambda_t >= 0.0 && self.lambda_s >= 0.0) {
            return Err(Error::Config("caps weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// `lambda_lower`, `lambda_upper` and `beta` are stored for an adaptive
/// weighting schedule; the loss uses the fixed weights `lambda_pi` and
/// `lambda_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L2c2Config {
    /// Half-width of the uniform interpolation factor.
    pub sigma: f64,
    pub lambda_pi: f64,
    pub lambda_v: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    pub beta: f64,
}

impl Default for L2c2Config {
    fn default() -> Self {
        Self { sigma: 1.0, lambda_pi: 1.0, lambda_v: 1.0, lambda_lower: 0.0, lambda_upper: 1.0, beta: 0.1 }
    }
}

impl L2c2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("l2c2.sigma must be > 0, got {}", self.sigma)));
        }
        let w = [self.lambda_pi, self.lambda_v, self.lambda_lower, self.lambda_upper, self.beta];
        if w.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Config("l2c2 weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Row-stack tensors with equal column counts.
pub fn stack_rows(parts: &[&Tensor]) -> Tensor {
    let cols = parts[0].cols();
    let rows = parts.iter().map(|p| p.rows()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for p in parts {
        assert_eq!(p.cols(), cols, "stack_rows: column mismatch");
        data.extend_from_slice(p.data());
    }
    Tensor::matrix(rows, cols, data)
}

fn check_pairs(s: &Tensor, s_next: &Tensor) -> Result<()> {
    if s.rows() == 0 {
        return Err(Error::Input("regularizer needs a nonempty batch".into()));
    }
    if s.shape() != s_next.shape() {
        return Err(Error::Input(format!("state batches differ in shape: {:?} vs {:?}", s.shape(), s_next.shape())));
    }
    Ok(())
}

/// `λ_T · mean ‖π(s_t) − π(s_{t+1})‖ + λ_S · mean ‖π(s_t) − π(s̄_t)‖` with a
/// given perturbed batch `s̄`. `pi` maps a `[B, n]` batch to action means.
pub fn caps_loss_with_noise<'t>(
    tape: &'t Tape,
    pi: &dyn Fn(Var<'t>) -> Result<Var<'t>>,
    s: &Tensor,
    s_next: &Tensor,
    s_bar: &Tensor,
    cfg: &CapsConfig,
) -> Result<Var<'t>> {
    check_pairs(s, s_next)?;
    check_pairs(s, s_bar)?;
    let b = s.rows();
    let out = pi(tape.constant(stack_rows(&[s, s_next, s_bar])))?;
    let a = out.slice_rows(0, b);
    let temporal = (a - out.slice_rows(b, b)).row_norms().mean();
    let spatial = (a - out.slice_rows(2 * b, b)).row_norms().mean();
    Ok(temporal.scale(cfg.lambda_t) + spatial.scale(cfg.lambda_s))
}

/// CAPS loss with `s̄ = s + N(0, σ)` drawn from `rng`.
pub fn caps_loss<'t>(
    tape: &'t Tape,
    pi: &dyn Fn(Var<'t>) -> Result<Var<'t>>,
    s: &Tensor,
    s_next: &Tensor,
    cfg: &CapsConfig,
    rng: &mut Rng,
) -> Result<Var<'t>> {
    cfg.validate()?;
    let normal = Normal::new(0.0, cfg.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut s_bar = s.clone();
    s_bar.data_mut().iter_mut().for_each(|x| *x += normal.sample(rng));
    caps_loss_with_noise(tape, pi, s, s_next, &s_bar, cfg)
}

/// `λ_π · mean ‖π(s) − π(s̄)‖ + λ_V · mean |V(s) − V(s̄)|` with
/// `s̄ = s + (s_next − s) ⊙ u` for a given factor batch `u`.
pub fn l2c2_loss_with_factors<'t>(
    tape: &'t Tape,
    pi: &dyn Fn(Var<'t>) -> Result<Var<'t>>,
    value: &dyn Fn(Var<'t>) -> Result<Var<'t>>,
    s: &Tensor,
    s_next: &Tensor,
    u: &Tensor,
    cfg: &L2c2Config,
) -> Result<Var<'t>> {
    check_pairs(s, s_next)?;
    check_pairs(s, u)?;
    let b = s.rows();
    let s_bar = s.zip_map(&s_next.zip_map(s, |n, c| n - c).zip_map(u, |d, f| d * f), |c, d| c + d);
    let both = tape.constant(stack_rows(&[s, &s_bar]));
    let mut total: Option<Var<'t>> = None;
    if cfg.lambda_pi != 0.0 {
        let a = pi(both)?;
        let term = (a.slice_rows(0, b) - a.slice_rows(b, b)).row_norms().mean().scale(cfg.lambda_pi);
        total = Some(term);
    }
    if cfg.lambda_v != 0.0 {
        let v = value(both)?;
        let term = (v.slice_rows(0, b) - v.slice_rows(b, b)).abs().mean().scale(cfg.lambda_v);
        total = Some(match total {
            None => term,
            Some(t) => t + term,
        });
    }
    Ok(total.unwrap_or_else(|| tape.scalar(0.0)))
}

/// L2C2 loss with `u ~ U[−σ, σ]` elementwise from `rng`.
pub fn l2c2_loss<'t>(
    tape: &'t Tape,
    pi: &dyn Fn(Var<'t>) -> Result<Var<'t>>,
    value: &dyn Fn(Var<'t>) -> Result<Var<'t>>,
    s: &Tensor,
    s_next: &Tensor,
    cfg: &L2c2Config,
    rng: &mut Rng,
) -> Result<Var<'t>> {
    cfg.validate()?;
    let dist = Uniform::new_inclusive(-cfg.sigma, cfg.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut u = s.clone();
    u.data_mut().iter_mut().for_each(|x| *x = dist.sample(rng));
    l2c2_loss_with_factors(tape, pi, value, s, s_next, &u, cfg)
}

/// Everything a regularizer may consume for one minibatch.
pub struct RegularizerBatch<'a, 't> {
    pub tape: &'t Tape,
    pub policy: &'a ActorCritic,
    pub params: &'a Binding<'t>,
    /// Normalized `s_t`, `[B, n]`.
    pub states: &'a Tensor,
    /// Normalized `s_{t+1}`, `[B, n]`.
    pub next_states: &'a Tensor,
    /// `K(s_t)` from the policy-loss forward pass (LipsNet only).
    pub k_values: Option<Var<'t>>,
}

/// Active regularizer terms for one minibatch. Terms whose weights are all
/// zero are skipped entirely, so they cannot perturb the result.
#[derive(Default)]
pub struct RegularizerTerms<'t> {
    pub caps: Option<Var<'t>>,
    pub l2c2: Option<Var<'t>>,
    pub liu: Option<Var<'t>>,
    pub lipsnet_k: Option<Var<'t>>,
}

impl<'t> RegularizerTerms<'t> {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, Var<'t>)> + '_ {
        [("caps", self.caps), ("l2c2", self.l2c2), ("liu", self.liu), ("lipsnet_k", self.lipsnet_k)]
            .into_iter()
            .filter_map(|(n, v)| v.map(|v| (n, v)))
    }

    /// Sum of active terms, or `None` when nothing is active.
    pub fn sum(&self) -> Option<Var<'t>> {
        self.iter().map(|(_, v)| v).reduce(|a, b| a + b)
    }
}

pub fn regularizer_terms<'t>(
    method: &MethodSpec,
    batch: &RegularizerBatch<'_, 't>,
    rng: &mut Rng,
) -> Result<RegularizerTerms<'t>> {
    let mut terms = RegularizerTerms::default();
    let policy = batch.policy;
    let params = batch.params;
    let pi = |x: Var<'t>| -> Result<Var<'t>> { Ok(policy.actor_forward(params, x)?.mean) };
    let value = |x: Var<'t>| policy.value_forward(params, x);
    for reg in &method.regularizers {
        match reg {
            Regularizer::Caps => {
                let c = &method.caps;
                if c.lambda_t != 0.0 || c.lambda_s != 0.0 {
                    terms.caps = Some(caps_loss(batch.tape, &pi, batch.states, batch.next_states, c, rng)?);
                }
            }
            Regularizer::L2c2 => {
                let c = &method.l2c2;
                if c.lambda_pi != 0.0 || c.lambda_v != 0.0 {
                    terms.l2c2 = Some(l2c2_loss(batch.tape, &pi, &value, batch.states, batch.next_states, c, rng)?);
                }
            }
            Regularizer::LiuLoss => {
                let (ActorNet::Liu(net), ArchSpec::Liu(spec)) = (policy.actor(), &method.arch) else {
                    return Err(Error::Config("liu_loss needs the liu architecture".into()));
                };
                if spec.c_loss_weight != 0.0 {
                    terms.liu = Some(liu_loss(&net.c_vars(params), spec.c_loss_weight));
                }
            }
            Regularizer::LipsnetKLoss => {
                let ArchSpec::Lipsnet(spec) = &method.arch else {
                    return Err(Error::Config("lipsnet_k_loss needs the lipsnet architecture".into()));
                };
                let k =
                    batch.k_values.ok_or_else(|| Error::Config("lipsnet_k_loss needs K(x) from the actor".into()))?;
                if spec.k_loss_weight != 0.0 {
                    terms.lipsnet_k = Some(lipsnet_k_loss(k, spec.k_loss_weight));
                }
            }
        }
    }
    Ok(terms)
}

/// `L_RL + Σ` active terms.
pub fn total_loss<'t>(rl_loss: Var<'t>, terms: &RegularizerTerms<'t>) -> Var<'t> {
    match terms.sum() {
        None => rl_loss,
        Some(r) => rl_loss + r,
    }
}
