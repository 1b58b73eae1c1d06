use crate::env::Environment;
use crate::error::{Error, Result};
use crate::policies::{ActMode, ActorCritic, RunningMeanStd};
use crate::rng::Rng;

use super::Trajectory;

/// Scales rewards by a running std of the discounted return.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardScaler {
    gamma: f64,
    ret: f64,
    rms: RunningMeanStd,
}

impl RewardScaler {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, ret: 0.0, rms: RunningMeanStd::new(1) }
    }

    pub fn scale(&mut self, reward: f64, done: bool) -> f64 {
        self.ret = self.ret * self.gamma + reward;
        self.rms.update(&[self.ret]);
        let scaled = reward / (self.rms.var[0] + 1e-8).sqrt();
        if done {
            self.ret = 0.0;
        }
        scaled
    }
}

/// Steps one environment across rollout boundaries.
pub struct RolloutCollector {
    env: Box<dyn Environment>,
    obs: Option<Vec<f64>>,
    episode_return: f64,
    /// Global step count, for error reporting.
    steps: usize,
    pub reward_scaler: Option<RewardScaler>,
    pub bootstrap_timeouts: bool,
}

impl RolloutCollector {
    pub fn new(env: Box<dyn Environment>) -> Self {
        Self { env, obs: None, episode_return: 0.0, steps: 0, reward_scaler: None, bootstrap_timeouts: true }
    }

    pub fn env(&self) -> &dyn Environment {
        self.env.as_ref()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Collect `length` transitions with stochastic actions, updating the
    /// policy's observation statistics as it goes.
    pub fn collect(&mut self, policy: &mut ActorCritic, length: usize, rng: &mut Rng) -> Result<Trajectory> {
        let spec = self.env.spec();
        if spec.observation_dim != policy.spec().obs_dim || spec.action_dim != policy.spec().act_dim {
            return Err(Error::Input("policy and environment dimensions differ".into()));
        }
        let mut traj = Trajectory::default();
        for _ in 0..length {
            let raw = match self.obs.take() {
                Some(o) => o,
                None => self.env.reset(),
            };
            policy.obs_rms.update(&raw);
            let obs = policy.normalize_obs(&raw);
            let out = policy.act_normalized(&obs, ActMode::Stochastic, rng)?;
            let step = self.steps;
            let r = self.env.step(&out.action).map_err(|e| Error::Env { step, source: Box::new(e) })?;
            self.steps += 1;
            self.episode_return += r.reward;
            let next = policy.normalize_obs(&r.observation);
            let terminal_value = if r.done && self.bootstrap_timeouts { policy.value(&next)? } else { 0.0 };
            let reward = match &mut self.reward_scaler {
                Some(s) => s.scale(r.reward, r.done),
                None => r.reward,
            };
            traj.observations.push(obs);
            traj.next_observations.push(next);
            traj.actions.push(out.action);
            traj.rewards.push(reward);
            traj.raw_rewards.push(r.reward);
            traj.dones.push(r.done);
            traj.values.push(out.value);
            traj.log_probs.push(out.log_prob);
            traj.terminal_values.push(terminal_value);
            if r.done {
                traj.episode_returns.push(std::mem::take(&mut self.episode_return));
            } else {
                self.obs = Some(r.observation);
            }
        }
        traj.bootstrap_value = match &self.obs {
            Some(o) => policy.value(&policy.normalize_obs(o))?,
            None => 0.0,
        };
        traj.validate()?;
        Ok(traj)
    }
}

/// Collect one rollout from a fresh episode, without reward scaling or
/// timeout bootstrapping.
pub fn collect_rollout(
    policy: &mut ActorCritic,
    env: Box<dyn Environment>,
    length: usize,
    rng: &mut Rng,
) -> Result<Trajectory> {
    RolloutCollector::new(env).collect(policy, length, rng)
}
