//! Planar point mass driven toward a target.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

use super::{check_action, EnvSpec, Environment, StepResult};

pub const REACHER_EPISODE_LENGTH: usize = 150;

#[derive(Debug, Clone, PartialEq)]
pub struct ReacherParams {
    pub dt: f64,
    pub mass: f64,
    /// Per-step velocity retention factor.
    pub damping: f64,
    pub max_force: f64,
    /// Positions are clipped to `[-arena, arena]` (velocity zeroed on contact).
    pub arena: f64,
    pub max_speed: f64,
}

impl Default for ReacherParams {
    fn default() -> Self {
        Self { dt: 0.05, mass: 1.0, damping: 0.95, max_force: 1.0, arena: 2.0, max_speed: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReacherState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub target: [f64; 2],
}

/// One semi-implicit Euler step. The reward uses the pre-step distance and
/// the clipped force.
pub fn reacher_dynamics(p: &ReacherParams, s: ReacherState, force: [f64; 2]) -> (ReacherState, f64) {
    let a = force.map(|f| f.clamp(-p.max_force, p.max_force));
    let dist = ((s.pos[0] - s.target[0]).powi(2) + (s.pos[1] - s.target[1]).powi(2)).sqrt();
    let reward = -dist - 0.001 * (a[0] * a[0] + a[1] * a[1]);
    let mut next = s;
    for i in 0..2 {
        let v = (p.damping * s.vel[i] + a[i] / p.mass * p.dt).clamp(-p.max_speed, p.max_speed);
        let x = s.pos[i] + v * p.dt;
        if x.abs() > p.arena {
            next.pos[i] = x.clamp(-p.arena, p.arena);
            next.vel[i] = 0.0;
        } else {
            next.pos[i] = x;
            next.vel[i] = v;
        }
    }
    (next, reward)
}

pub struct Reacher {
    params: ReacherParams,
    nominal_mass: f64,
    nominal_damping: f64,
    state: ReacherState,
    step_count: usize,
    rng: Rng,
}

impl Reacher {
    pub fn new(seed: u64) -> Self {
        let params = ReacherParams::default();
        Self {
            nominal_mass: params.mass,
            nominal_damping: params.damping,
            params,
            state: ReacherState { pos: [0.0; 2], vel: [0.0; 2], target: [0.0; 2] },
            step_count: 0,
            rng: stream(seed, "env/reacher"),
        }
    }

    pub fn state(&self) -> ReacherState {
        self.state
    }

    pub fn set_state(&mut self, state: ReacherState) {
        self.state = state;
        self.step_count = 0;
    }

    fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        vec![s.pos[0], s.pos[1], s.vel[0], s.vel[1], s.target[0], s.target[1]]
    }
}

impl Environment for Reacher {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: 6,
            action_dim: 2,
            episode_length: REACHER_EPISODE_LENGTH,
            dt: self.params.dt,
            action_bound: self.params.max_force,
            observation_groups: vec![("position", 0..2), ("velocity", 2..4), ("target", 4..6)],
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        let mut draw = || [self.rng.random_range(-1.0..1.0), self.rng.random_range(-1.0..1.0)];
        let pos = draw();
        let target = draw();
        self.state = ReacherState { pos, vel: [0.0; 2], target };
        self.step_count = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_action(action, 2)?;
        if self.step_count >= REACHER_EPISODE_LENGTH {
            return Err(Error::Input("episode finished; reset before stepping".into()));
        }
        let (next, reward) = reacher_dynamics(&self.params, self.state, [action[0], action[1]]);
        self.state = next;
        self.step_count += 1;
        Ok(StepResult { observation: self.observe(), reward, done: self.step_count == REACHER_EPISODE_LENGTH })
    }

    fn set_mass_scale(&mut self, scale: f64) {
        self.params.mass = self.nominal_mass * scale;
    }

    fn set_dynamics_scale(&mut self, key: &str, scale: f64) -> Result<()> {
        match key {
            "damping" => {
                self.params.damping = (self.nominal_damping * scale).min(1.0);
                Ok(())
            }
            _ => Err(Error::Config(format!("reacher has no dynamics coefficient `{key}`"))),
        }
    }

    fn dynamics_keys(&self) -> &'static [&'static str] {
        &["damping"]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn at_target_and_still_has_zero_reward() {
        let s = ReacherState { pos: [0.3, -0.2], vel: [0.0; 2], target: [0.3, -0.2] };
        let (next, r) = reacher_dynamics(&ReacherParams::default(), s, [0.0, 0.0]);
        assert_eq!(r, 0.0);
        assert_eq!(next, s);
    }

    #[test]
    fn force_is_clipped() {
        let p = ReacherParams::default();
        let s = ReacherState { pos: [0.1, 0.5], vel: [0.2, -0.1], target: [1.0, 1.0] };
        assert_eq!(reacher_dynamics(&p, s, [2.0, 0.0]), reacher_dynamics(&p, s, [1.0, 0.0]));
    }

    #[test]
    fn return_is_sum_of_logged_rewards() {
        let mut env = Reacher::new(5);
        let mut rng = crate::rng::stream(5, "test");
        env.reset();
        let mut rewards = Vec::new();
        let mut total = 0.0;
        loop {
            let a = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let r = env.step(&a).unwrap();
            rewards.push(r.reward);
            total += r.reward;
            let s = env.state();
            assert!(s.pos.iter().all(|x| x.abs() <= 2.0));
            assert!(s.vel.iter().all(|v| v.abs() <= 5.0));
            if r.done {
                break;
            }
        }
        assert_eq!(rewards.len(), 150);
        assert_eq!(rewards.iter().sum::<f64>(), total);
    }

    #[test]
    fn target_resampled_each_episode() {
        let mut env = Reacher::new(1);
        let a = env.reset();
        let b = env.reset();
        assert_ne!(a[4..6], b[4..6]);
    }
}
