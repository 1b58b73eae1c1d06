use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::policies::{gaussian_entropy, gaussian_log_prob, ActorCritic};
use crate::regularizers::{regularizer_terms, total_loss, MethodSpec, RegularizerBatch};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{clip_grad_norm, compute_gae, normalize_advantages, Adam, PpoConfig, Trajectory};

/// Per-term loss means over all minibatches of one update.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UpdateStats {
    pub loss_total: f64,
    pub loss_rl: f64,
    pub loss_clip: f64,
    pub loss_value: f64,
    pub entropy: f64,
    pub loss_reg: f64,
    pub reg_terms: BTreeMap<String, f64>,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Mean global gradient norm before clipping.
    pub grad_norm: f64,
    pub minibatches: usize,
    /// Largest `|total − (rl + reg)|` seen in any minibatch.
    pub decomposition_error: f64,
}

struct Minibatch {
    idx: Vec<usize>,
    obs: Tensor,
    next_obs: Tensor,
    actions: Tensor,
    old_log_probs: Tensor,
    advantages: Tensor,
    returns: Tensor,
}

impl Minibatch {
    fn gather(traj: &Trajectory, adv: &[f64], ret: &[f64], idx: &[usize]) -> Result<Self> {
        let rows = |src: &[Vec<f64>]| Tensor::from_rows(&idx.iter().map(|&i| src[i].clone()).collect::<Vec<_>>());
        let col = |src: &[f64]| Tensor::column(&idx.iter().map(|&i| src[i]).collect::<Vec<_>>());
        Ok(Self {
            idx: idx.to_vec(),
            obs: rows(&traj.observations)?,
            next_obs: rows(&traj.next_observations)?,
            actions: rows(&traj.actions)?,
            old_log_probs: col(&traj.log_probs),
            advantages: col(adv),
            returns: col(ret),
        })
    }
}

struct MinibatchLosses {
    total: f64,
    rl: f64,
    clip: f64,
    value: f64,
    entropy: f64,
    terms: Vec<(&'static str, f64)>,
    approx_kl: f64,
    clip_fraction: f64,
}

/// One PPO update: `epochs` passes over shuffled minibatches of `traj`,
/// minimizing `L_clip + c_V L_V − c_H H + Σ regularizers`.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut ActorCritic,
    adam: &mut Adam,
    traj: &Trajectory,
    cfg: &PpoConfig,
    method: &MethodSpec,
    update: usize,
    shuffle_rng: &mut Rng,
    reg_rng: &mut Rng,
) -> Result<UpdateStats> {
    traj.validate()?;
    if traj.is_empty() {
        return Err(Error::Input("empty trajectory".into()));
    }
    let gae = compute_gae(traj, cfg.gamma, cfg.gae_lambda);
    let adv = normalize_advantages(&gae.advantages);
    let mut stats = UpdateStats::default();
    let mut order: Vec<usize> = (0..traj.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(shuffle_rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            let mb = Minibatch::gather(traj, &adv, &gae.returns, chunk)?;
            policy.before_update();
            let (losses, mut grads) = minibatch_step(policy, &mb, cfg, method, reg_rng)
                .map_err(|e| nonfinite(e, update, epoch, &mb, None))?;
            if !losses.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(nonfinite(Error::NonFinite { op: "loss", node: 0 }, update, epoch, &mb, Some(&losses)));
            }
            let norm = clip_grad_norm(&mut grads, cfg.max_grad_norm);
            adam.step(policy.params_mut().values_mut(), &grads);

            let reg: f64 = losses.terms.iter().map(|(_, v)| v).sum();
            stats.decomposition_error = stats.decomposition_error.max((losses.total - (losses.rl + reg)).abs());
            stats.loss_total += losses.total;
            stats.loss_rl += losses.rl;
            stats.loss_clip += losses.clip;
            stats.loss_value += losses.value;
            stats.entropy += losses.entropy;
            stats.loss_reg += reg;
            for (name, v) in &losses.terms {
                *stats.reg_terms.entry((*name).to_string()).or_insert(0.0) += v;
            }
            stats.approx_kl += losses.approx_kl;
            stats.clip_fraction += losses.clip_fraction;
            stats.grad_norm += norm;
            stats.minibatches += 1;
        }
    }
    policy.check_params()?;
    let n = stats.minibatches as f64;
    for x in [
        &mut stats.loss_total,
        &mut stats.loss_rl,
        &mut stats.loss_clip,
        &mut stats.loss_value,
        &mut stats.entropy,
        &mut stats.loss_reg,
        &mut stats.approx_kl,
        &mut stats.clip_fraction,
        &mut stats.grad_norm,
    ] {
        *x /= n;
    }
    stats.reg_terms.values_mut().for_each(|v| *v /= n);
    Ok(stats)
}

fn minibatch_step(
    policy: &ActorCritic,
    mb: &Minibatch,
    cfg: &PpoConfig,
    method: &MethodSpec,
    reg_rng: &mut Rng,
) -> Result<(MinibatchLosses, Vec<Tensor>)> {
    let tape = Tape::new();
    let params = policy.params().bind(&tape);
    let obs = tape.constant(mb.obs.clone());
    let out = policy.actor_forward(&params, obs)?;
    let log_std = policy.log_std(&params);
    let log_prob = gaussian_log_prob(out.mean, log_std, tape.constant(mb.actions.clone()));
    let log_ratio = log_prob - tape.constant(mb.old_log_probs.clone());
    let ratio = log_ratio.exp();
    let adv = tape.constant(mb.advantages.clone());
    let l_clip = clipped_surrogate(ratio, adv, cfg.clip_ratio);

    let value = policy.value_forward(&params, obs)?;
    let l_value = (value - tape.constant(mb.returns.clone())).square().mean();
    let entropy = gaussian_entropy(log_std);

    let mut rl = l_clip + l_value.scale(cfg.value_coef);
    if cfg.entropy_coef != 0.0 {
        rl = rl - entropy.scale(cfg.entropy_coef);
    }
    let batch = RegularizerBatch {
        tape: &tape,
        policy,
        params: &params,
        states: &mb.obs,
        next_states: &mb.next_obs,
        k_values: out.k,
    };
    let terms = regularizer_terms(method, &batch, reg_rng)?;
    let total = total_loss(rl, &terms);
    tape.check_finite()?;
    let grads = tape.gradients(total, params.vars())?;

    let r = ratio.value();
    let lr = log_ratio.value();
    let n = r.len() as f64;
    let approx_kl = r.data().iter().zip(lr.data()).map(|(r, l)| (r - 1.0) - l).sum::<f64>() / n;
    let clip_fraction = r.data().iter().filter(|r| (*r - 1.0).abs() > cfg.clip_ratio).count() as f64 / n;
    let losses = MinibatchLosses {
        total: total.item(),
        rl: rl.item(),
        clip: l_clip.item(),
        value: l_value.item(),
        entropy: entropy.item(),
        terms: terms.iter().map(|(name, v)| (name, v.item())).collect(),
        approx_kl,
        clip_fraction,
    };
    Ok((losses, grads))
}

/// `−mean(min(ρ A, clip(ρ, 1 − ε, 1 + ε) A))`.
pub(crate) fn clipped_surrogate<'t>(ratio: Var<'t>, adv: Var<'t>, clip: f64) -> Var<'t> {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    unclipped.minimum(clipped).mean().scale(-1.0)
}

fn nonfinite(cause: Error, update: usize, epoch: usize, mb: &Minibatch, losses: Option<&MinibatchLosses>) -> Error {
    if !matches!(cause, Error::NonFinite { .. }) {
        return cause;
    }
    let losses = losses.map(|l| {
        serde_json::json!({
            "total": l.total, "rl": l.rl, "clip": l.clip, "value": l.value, "entropy": l.entropy,
            "terms": l.terms.iter().map(|(n, v)| (n.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        })
    });
    let dump = serde_json::json!({
        "cause": cause.to_string(),
        "indices": mb.idx,
        "observations": mb.obs.data(),
        "actions": mb.actions.data(),
        "advantages": mb.advantages.data(),
        "returns": mb.returns.data(),
        "old_log_probs": mb.old_log_probs.data(),
        "losses": losses,
    });
    Error::NonFiniteLoss { update, epoch, dump: dump.to_string() }
}
