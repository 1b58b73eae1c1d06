//! Training-time perturbation of dynamics and sensing.
//!
//! Per episode the mass (and any configured dynamics coefficients) is scaled
//! by a uniform draw; per step Gaussian noise is added to the executed action
//! and to each observation group. The wrapper draws from its own stream, so
//! with every knob neutral it reproduces the bare environment exactly.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

use super::{EnvSpec, Environment, StepResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainRandomizationConfig {
    /// Std of additive Gaussian noise on executed actions.
    pub action_noise_std: f64,
    /// Per-episode mass multiplier range.
    pub mass_scale_range: [f64; 2],
    /// Std of additive Gaussian sensor noise, keyed by observation group.
    pub obs_noise_std: BTreeMap<String, f64>,
    /// Per-episode multiplier ranges for environment-specific coefficients
    /// (`torque_gain` for the pendulum, `damping` for the reacher).
    pub friction_or_gain_ranges: BTreeMap<String, [f64; 2]>,
}

impl Default for DomainRandomizationConfig {
    fn default() -> Self {
        let obs_noise_std =
            [("angle", 0.02), ("angular_velocity", 0.3), ("position", 0.02), ("velocity", 0.25), ("target", 0.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
        Self {
            action_noise_std: 0.02,
            mass_scale_range: [0.95, 1.05],
            obs_noise_std,
            friction_or_gain_ranges: BTreeMap::new(),
        }
    }
}

impl DomainRandomizationConfig {
    /// Every knob neutral.
    pub fn none() -> Self {
        Self {
            action_noise_std: 0.0,
            mass_scale_range: [1.0, 1.0],
            obs_noise_std: BTreeMap::new(),
            friction_or_gain_ranges: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: &[f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !(self.action_noise_std >= 0.0 && self.action_noise_std.is_finite()) {
            return Err(Error::Config(format!("action_noise_std must be >= 0, got {}", self.action_noise_std)));
        }
        if !range_ok(&self.mass_scale_range) || self.mass_scale_range[0] <= 0.0 {
            return Err(Error::Config(format!("invalid mass_scale_range {:?}", self.mass_scale_range)));
        }
        for (k, v) in &self.obs_noise_std {
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("obs_noise_std.{k} must be >= 0, got {v}")));
            }
        }
        for (k, r) in &self.friction_or_gain_ranges {
            if !range_ok(r) {
                return Err(Error::Config(format!("invalid range for {k}: {r:?}")));
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

pub struct Randomized<E> {
    inner: E,
    config: DomainRandomizationConfig,
    /// (observation index range, std) for groups with nonzero noise.
    obs_noise: Vec<(std::ops::Range<usize>, f64)>,
    rng: Rng,
}

impl<E: Environment> Randomized<E> {
    pub fn new(inner: E, config: DomainRandomizationConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let spec = inner.spec();
        let keys = inner.dynamics_keys();
        if let Some(k) = config.friction_or_gain_ranges.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "`{k}` is not a dynamics coefficient of this environment (have {keys:?})"
            )));
        }
        // Groups named for other environments are ignored.
        let obs_noise = spec
            .observation_groups
            .iter()
            .filter_map(|(name, range)| {
                config.obs_noise_std.get(*name).filter(|s| **s > 0.0).map(|s| (range.clone(), *s))
            })
            .collect();
        Ok(Self { inner, config, obs_noise, rng: stream(seed, "domain-randomization") })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    fn noisy(&mut self, mut obs: Vec<f64>) -> Vec<f64> {
        for (range, std) in &self.obs_noise {
            let normal = Normal::new(0.0, *std).expect("validated std");
            for x in &mut obs[range.clone()] {
                *x += normal.sample(&mut self.rng);
            }
        }
        obs
    }
}

impl<E: Environment> Environment for Randomized<E> {
    fn spec(&self) -> EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self) -> Vec<f64> {
        let scale = uniform(&mut self.rng, self.config.mass_scale_range);
        self.inner.set_mass_scale(scale);
        let ranges: Vec<(String, [f64; 2])> =
            self.config.friction_or_gain_ranges.iter().map(|(k, r)| (k.clone(), *r)).collect();
        for (key, range) in ranges {
            let s = uniform(&mut self.rng, range);
            self.inner.set_dynamics_scale(&key, s).expect("keys validated at construction");
        }
        let obs = self.inner.reset();
        self.noisy(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let executed: Vec<f64> = if self.config.action_noise_std > 0.0 {
            let normal = Normal::new(0.0, self.config.action_noise_std).expect("validated std");
            action.iter().map(|a| a + normal.sample(&mut self.rng)).collect()
        } else {
            action.to_vec()
        };
        let mut out = self.inner.step(&executed)?;
        out.observation = self.noisy(std::mem::take(&mut out.observation));
        Ok(out)
    }

    fn set_mass_scale(&mut self, scale: f64) {
        self.inner.set_mass_scale(scale)
    }

    fn set_dynamics_scale(&mut self, key: &str, scale: f64) -> Result<()> {
        self.inner.set_dynamics_scale(key, scale)
    }

    fn dynamics_keys(&self) -> &'static [&'static str] {
        self.inner.dynamics_keys()
    }
}
