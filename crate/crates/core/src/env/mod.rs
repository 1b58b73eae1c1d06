//! Continuous-control environments with closed-form dynamics and a
//! domain-randomization wrapper.

mod pendulum;
mod randomization;
mod reacher;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pendulum::{pendulum_dynamics, Pendulum, PendulumParams, PendulumState};
pub use randomization::{DomainRandomizationConfig, Randomized};
pub use reacher::{reacher_dynamics, Reacher, ReacherParams, ReacherState};
pub use trace::{write_action_trace, write_observation_trace};

/// Outcome of a single environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// The episode reached its fixed horizon.
    pub done: bool,
}

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub action_dim: usize,
    pub episode_length: usize,
    /// Control period in seconds.
    pub dt: f64,
    /// Actions are clipped to `[-action_bound, action_bound]` per dimension.
    pub action_bound: f64,
    /// Named slices of the observation vector, used for sensor noise.
    pub observation_groups: Vec<(&'static str, std::ops::Range<usize>)>,
}

impl EnvSpec {
    pub fn sampling_frequency(&self) -> f64 {
        1.0 / self.dt
    }
}

pub trait Environment: Send {
    fn spec(&self) -> EnvSpec;

    /// Start a new episode and return its first observation.
    fn reset(&mut self) -> Vec<f64>;

    /// Advance one control step. Actions outside the bound are clipped;
    /// non-finite actions and steps past the horizon are rejected.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Scale the moving mass for subsequent steps.
    fn set_mass_scale(&mut self, scale: f64);

    /// Scale an environment-specific dynamics coefficient.
    fn set_dynamics_scale(&mut self, key: &str, scale: f64) -> Result<()>;

    /// Keys accepted by [`Environment::set_dynamics_scale`].
    fn dynamics_keys(&self) -> &'static [&'static str];
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn spec(&self) -> EnvSpec {
        (**self).spec()
    }
    fn reset(&mut self) -> Vec<f64> {
        (**self).reset()
    }
    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        (**self).step(action)
    }
    fn set_mass_scale(&mut self, scale: f64) {
        (**self).set_mass_scale(scale)
    }
    fn set_dynamics_scale(&mut self, key: &str, scale: f64) -> Result<()> {
        (**self).set_dynamics_scale(key, scale)
    }
    fn dynamics_keys(&self) -> &'static [&'static str] {
        (**self).dynamics_keys()
    }
}

/// Selectable environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Pendulum,
    Reacher,
}

impl EnvKind {
    pub const ALL: [EnvKind; 2] = [EnvKind::Pendulum, EnvKind::Reacher];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::Reacher => "reacher",
        }
    }

    pub fn make(self, seed: u64) -> Box<dyn Environment> {
        match self {
            EnvKind::Pendulum => Box::new(Pendulum::new(seed)),
            EnvKind::Reacher => Box::new(Reacher::new(seed)),
        }
    }

    /// Environment wrapped with domain randomization when `dr` is given.
    pub fn make_with(self, seed: u64, dr: Option<&DomainRandomizationConfig>) -> Result<Box<dyn Environment>> {
        let env = self.make(seed);
        Ok(match dr {
            None => env,
            Some(cfg) => Box::new(Randomized::new(env, cfg.clone(), seed)?),
        })
    }

    pub fn spec(self) -> EnvSpec {
        self.make(0).spec()
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pendulum" => Ok(EnvKind::Pendulum),
            "reacher" => Ok(EnvKind::Reacher),
            other => Err(Error::Input(format!("unknown environment `{other}` (expected pendulum | reacher)"))),
        }
    }
}

pub(crate) fn check_action(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(Error::Input(format!("expected {dim}-dimensional action, got {}", action.len())));
    }
    if let Some(a) = action.iter().find(|a| !a.is_finite()) {
        return Err(Error::Input(format!("non-finite action component {a}")));
    }
    Ok(())
}
