//! Inverted pendulum swing-up with the classic Gym constants.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

use super::{check_action, EnvSpec, Environment, StepResult};

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    /// Multiplier on applied torque (1 unless randomized).
    pub torque_gain: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self { gravity: 10.0, mass: 1.0, length: 1.0, dt: 0.05, max_torque: 2.0, max_speed: 8.0, torque_gain: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    /// Angle from upright, radians.
    pub theta: f64,
    pub theta_dot: f64,
}

pub const PENDULUM_EPISODE_LENGTH: usize = 200;

/// Wrap an angle to `[-π, π)`.
pub fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// One semi-implicit Euler step. Returns the next state and the reward of
/// the transition, which penalizes the pre-step state and the clipped torque.
pub fn pendulum_dynamics(p: &PendulumParams, s: PendulumState, torque: f64) -> (PendulumState, f64) {
    let u = torque.clamp(-p.max_torque, p.max_torque);
    let th = angle_normalize(s.theta);
    let cost = th * th + 0.1 * s.theta_dot * s.theta_dot + 0.001 * u * u;
    let accel =
        3.0 * p.gravity / (2.0 * p.length) * s.theta.sin() + 3.0 / (p.mass * p.length * p.length) * (p.torque_gain * u);
    let theta_dot = (s.theta_dot + accel * p.dt).clamp(-p.max_speed, p.max_speed);
    let theta = s.theta + theta_dot * p.dt;
    (PendulumState { theta, theta_dot }, -cost)
}

pub struct Pendulum {
    params: PendulumParams,
    nominal_mass: f64,
    state: PendulumState,
    step_count: usize,
    rng: Rng,
}

impl Pendulum {
    pub fn new(seed: u64) -> Self {
        let params = PendulumParams::default();
        Self {
            nominal_mass: params.mass,
            params,
            state: PendulumState { theta: PI, theta_dot: 0.0 },
            step_count: 0,
            rng: stream(seed, "env/pendulum"),
        }
    }

    pub fn state(&self) -> PendulumState {
        self.state
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    /// Place the pendulum in a given state and restart the step counter.
    pub fn set_state(&mut self, state: PendulumState) {
        self.state = state;
        self.step_count = 0;
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.state.theta.cos(), self.state.theta.sin(), self.state.theta_dot]
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation_dim: 3,
            action_dim: 1,
            episode_length: PENDULUM_EPISODE_LENGTH,
            dt: self.params.dt,
            action_bound: self.params.max_torque,
            observation_groups: vec![("angle", 0..2), ("angular_velocity", 2..3)],
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state =
            PendulumState { theta: self.rng.random_range(-PI..PI), theta_dot: self.rng.random_range(-1.0..1.0) };
        self.step_count = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        check_action(action, 1)?;
        if self.step_count >= PENDULUM_EPISODE_LENGTH {
            return Err(Error::Input("episode finished; reset before stepping".into()));
        }
        let (next, reward) = pendulum_dynamics(&self.params, self.state, action[0]);
        self.state = next;
        self.step_count += 1;
        Ok(StepResult { observation: self.observe(), reward, done: self.step_count == PENDULUM_EPISODE_LENGTH })
    }

    fn set_mass_scale(&mut self, scale: f64) {
        self.params.mass = self.nominal_mass * scale;
    }

    fn set_dynamics_scale(&mut self, key: &str, scale: f64) -> Result<()> {
        match key {
            "torque_gain" => {
                self.params.torque_gain = scale;
                Ok(())
            }
            _ => Err(Error::Config(format!("pendulum has no dynamics coefficient `{key}`"))),
        }
    }

    fn dynamics_keys(&self) -> &'static [&'static str] {
        &["torque_gain"]
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    /// Independent transcription of the reference update.
    fn hand_step(th: f64, thdot: f64, u: f64) -> (f64, f64, f64) {
        let (g, m, l, dt) = (10.0, 1.0, 1.0, 0.05);
        let u = u.clamp(-2.0, 2.0);
        let thn = ((th + PI) % (2.0 * PI) + 2.0 * PI) % (2.0 * PI) - PI;
        let costs = thn.powi(2) + 0.1 * thdot.powi(2) + 0.001 * u.powi(2);
        let mut newthdot = thdot + (3.0 * g / (2.0 * l) * th.sin() + 3.0 / (m * l.powi(2)) * u) * dt;
        newthdot = newthdot.clamp(-8.0, 8.0);
        let newth = th + newthdot * dt;
        (newth, newthdot, -costs)
    }

    #[test]
    fn upright_at_rest_has_zero_reward() {
        let (_, r) = pendulum_dynamics(&PendulumParams::default(), PendulumState { theta: 0.0, theta_dot: 0.0 }, 0.0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn torque_is_clipped() {
        let p = PendulumParams::default();
        let s = PendulumState { theta: 0.4, theta_dot: -0.3 };
        assert_eq!(pendulum_dynamics(&p, s, 5.0), pendulum_dynamics(&p, s, 2.0));
        assert_eq!(pendulum_dynamics(&p, s, -7.0), pendulum_dynamics(&p, s, -2.0));
    }

    #[test]
    fn matches_hand_integrator() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = PendulumParams::default();
        for _ in 0..10_000 {
            let th = rng.random_range(-10.0..10.0);
            let thdot = rng.random_range(-8.0..8.0);
            let u = rng.random_range(-4.0..4.0);
            let (next, r) = pendulum_dynamics(&p, PendulumState { theta: th, theta_dot: thdot }, u);
            let (eth, ethdot, er) = hand_step(th, thdot, u);
            assert!((next.theta - eth).abs() < 1e-12);
            assert!((next.theta_dot - ethdot).abs() < 1e-12);
            assert!((r - er).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_horizon_and_reward_bounds() {
        let mut env = Pendulum::new(3);
        let lo = -(PI * PI + 0.1 * 64.0 + 0.001 * 4.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3 {
            env.reset();
            let mut steps = 0;
            loop {
                let r = env.step(&[rng.random_range(-3.0..3.0)]).unwrap();
                steps += 1;
                assert!(r.reward <= 0.0 && r.reward >= lo);
                assert!(r.observation[2].abs() <= 8.0);
                if r.done {
                    break;
                }
            }
            assert_eq!(steps, 200);
            assert!(env.step(&[0.0]).is_err());
        }
    }

    #[test]
    fn rejects_non_finite_actions() {
        let mut env = Pendulum::new(0);
        env.reset();
        assert!(env.step(&[f64::NAN]).is_err());
        assert!(env.step(&[f64::INFINITY]).is_err());
        assert!(env.step(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn angle_normalization_range() {
        for x in [-7.0, -PI, -1.0, 0.0, 3.0, PI, 9.5] {
            let y = angle_normalize(x);
            assert!((-PI..PI).contains(&y));
            assert!(((x - y) / (2.0 * PI)).fract().abs() < 1e-12 || ((x - y) / (2.0 * PI)).fract().abs() > 1.0 - 1e-12);
        }
    }
}
