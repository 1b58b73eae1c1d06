//! Clipped-surrogate PPO with generalized advantage estimation, shared by
//! every method. Methods differ only in the actor architecture and in the
//! regularizer terms added to the loss.

mod adam;
mod rollout;
mod train;
mod update;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{clip_grad_norm, Adam};
pub use rollout::{collect_rollout, RewardScaler, RolloutCollector};
pub use train::{train, write_curve_csv, CurveRow, TrainConfig, TrainOutcome, CURVE_HEADER};
pub use update::{ppo_update, UpdateStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_ratio: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub adam_eps: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub rollout_length: usize,
    pub total_steps: usize,
    /// Bootstrap with `V(s_T)` when an episode ends at its time limit. Both
    /// built-in environments end only there.
    pub bootstrap_timeouts: bool,
    /// Divide rewards by a running std of the discounted return.
    pub normalize_rewards: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_ratio: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 10,
            minibatch_size: 64,
            learning_rate: 3e-4,
            adam_eps: 1e-5,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            rollout_length: 2048,
            total_steps: 150_000,
            bootstrap_timeouts: true,
            normalize_rewards: false,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("ppo: {what}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(&format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return bad(&format!("clip_ratio must be in (0, 1), got {}", self.clip_ratio));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(&format!("gae_lambda must be in [0, 1], got {}", self.gae_lambda));
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.rollout_length == 0 || self.total_steps == 0 {
            return bad("epochs, minibatch_size, rollout_length and total_steps must be positive");
        }
        if !(self.learning_rate > 0.0 && self.adam_eps > 0.0 && self.max_grad_norm > 0.0) {
            return bad("learning_rate, adam_eps and max_grad_norm must be positive");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return bad("loss coefficients must be >= 0");
        }
        Ok(())
    }
}

/// One rollout. Observations are stored normalized, as the policy saw them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    /// `s_{t+1}`; at episode ends, the final observation before the reset.
    pub next_observations: Vec<Vec<f64>>,
    /// Sampled (unclipped) actions.
    pub actions: Vec<Vec<f64>>,
    /// Rewards the learner sees (scaled when reward normalization is on).
    pub rewards: Vec<f64>,
    /// Rewards reported by the environment.
    pub raw_rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub values: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// `V(s_{t+1})` for steps that end an episode at its time limit, else 0.
    pub terminal_values: Vec<f64>,
    pub bootstrap_value: f64,
    /// Raw returns of episodes finished during this rollout.
    pub episode_returns: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.observations.len(),
            self.next_observations.len(),
            self.actions.len(),
            self.raw_rewards.len(),
            self.dones.len(),
            self.values.len(),
            self.log_probs.len(),
            self.terminal_values.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Input(format!("trajectory sequences differ in length: {n} vs {lens:?}")));
        }
        if let Some(t) = self.log_probs.iter().position(|l| !l.is_finite()) {
            return Err(Error::Input(format!("non-finite log-probability at step {t}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gae {
    pub advantages: Vec<f64>,
    /// `A + V`, the value targets.
    pub returns: Vec<f64>,
}

/// `A_t = Σ_k (γλ)^k δ_{t+k}` within an episode, with
/// `δ_t = r_t + γ (V(s_{t+1})(1 − done_t) + done_t · terminal_value_t) − V(s_t)`.
/// Advantages are returned unnormalized; see [`normalize_advantages`].
pub fn compute_gae(traj: &Trajectory, gamma: f64, lambda: f64) -> Gae {
    let n = traj.len();
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = if traj.dones[t] {
            (traj.terminal_values[t], 0.0)
        } else {
            let v = if t + 1 < n { traj.values[t + 1] } else { traj.bootstrap_value };
            (v, next_adv)
        };
        let delta = traj.rewards[t] + gamma * next_value - traj.values[t];
        next_adv = delta + gamma * lambda * carry;
        advantages[t] = next_adv;
    }
    let returns = advantages.iter().zip(&traj.values).map(|(a, v)| a + v).collect();
    Gae { advantages, returns }
}

/// Shift and scale to mean 0, std 1 (population std, guarded by 1e-8).
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    adv.iter().map(|a| (a - mean) / (std + 1e-8)).collect()
}
