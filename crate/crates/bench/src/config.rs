//! Benchmark configuration, read from TOML.
//!
//! ```toml
//! envs = ["pendulum"]
//! methods = ["vanilla", "lipsnet+caps"]
//! seeds = 9              # or an explicit list: [0, 4, 7]
//! eval_episodes = 100
//! out = "results"
//! workers = 2
//! domain_randomization = false
//!
//! [steps]
//! pendulum = 150000
//!
//! [ppo]                  # any trainer field; unset fields keep defaults
//! learning_rate = 3e-4
//!
//! [dr]                   # used when domain_randomization = true
//! action_noise_std = 0.02
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smoothrl_core::env::{DomainRandomizationConfig, EnvKind};
use smoothrl_core::ppo::PpoConfig;
use smoothrl_core::regularizers::{MethodSpec, METHOD_GRAMMAR, METHOD_NAMES};

use crate::error::{BenchError, Result};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn list(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }

    /// `"9"` is a count, `"0,3,5"` a list.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || BenchError::Usage(format!("invalid --seeds `{s}`: expected a count or a comma-separated list"));
        if s.contains(',') {
            s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>().map(Seeds::List)
        } else {
            s.trim().parse().map(Seeds::Count).map_err(|_| bad())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub format_version: u32,
    pub envs: Vec<EnvKind>,
    pub methods: Vec<String>,
    pub seeds: Seeds,
    /// Training steps per environment.
    pub steps: BTreeMap<EnvKind, usize>,
    pub eval_episodes: usize,
    pub out: PathBuf,
    pub workers: usize,
    pub domain_randomization: bool,
    pub dr: DomainRandomizationConfig,
    pub ppo: PpoConfig,
    pub critic_hidden: Vec<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            envs: vec![EnvKind::Pendulum],
            methods: METHOD_NAMES.iter().map(|s| s.to_string()).collect(),
            seeds: Seeds::Count(9),
            steps: default_steps(),
            eval_episodes: 100,
            out: PathBuf::from("results"),
            workers: 1,
            domain_randomization: false,
            dr: DomainRandomizationConfig::default(),
            ppo: PpoConfig::default(),
            critic_hidden: vec![64, 64],
        }
    }
}

pub fn default_steps() -> BTreeMap<EnvKind, usize> {
    BTreeMap::from([(EnvKind::Pendulum, 150_000), (EnvKind::Reacher, 400_000)])
}

impl BenchmarkConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text)?;
        // A partial [steps] table keeps the defaults for the other envs.
        for (env, steps) in default_steps() {
            cfg.steps.entry(env).or_insert(steps);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn method_specs(&self) -> Result<Vec<MethodSpec>> {
        self.methods
            .iter()
            .map(|m| {
                m.parse::<MethodSpec>().map_err(|e| match e {
                    smoothrl_core::Error::Input(_) => {
                        BenchError::Usage(format!("unknown method `{m}`; expected one of: {METHOD_GRAMMAR}"))
                    }
                    e => e.into(),
                })
            })
            .collect()
    }

    pub fn steps_for(&self, env: EnvKind) -> usize {
        self.steps.get(&env).copied().unwrap_or(self.ppo.total_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(BenchError::Config(format!(
                "unsupported format_version {} (expected {CONFIG_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.envs.is_empty() || self.methods.is_empty() {
            return Err(BenchError::Config("envs and methods must be nonempty".into()));
        }
        let seeds = self.seeds.list();
        if seeds.is_empty() {
            return Err(BenchError::Config("seeds must be >= 1".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(BenchError::Config("seed list contains duplicates".into()));
        }
        if self.eval_episodes == 0 || self.workers == 0 {
            return Err(BenchError::Config("eval_episodes and workers must be >= 1".into()));
        }
        if self.envs.iter().any(|&e| self.steps_for(e) == 0) {
            return Err(BenchError::Config("steps must be >= 1".into()));
        }
        self.method_specs()?;
        self.ppo.validate()?;
        if self.domain_randomization {
            self.dr.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = BenchmarkConfig::default();
        c.validate().unwrap();
        assert_eq!(c.seeds.list().len(), 9);
        assert_eq!(c.method_specs().unwrap().len(), 8);
    }

    #[test]
    fn toml_round_trip_and_partial_tables() {
        let c = BenchmarkConfig::from_toml(
            "envs = [\"reacher\"]\nmethods = [\"caps\"]\nseeds = [3, 5]\n[steps]\nreacher = 1000\n[ppo]\nepochs = 3\n",
        )
        .unwrap();
        assert_eq!(c.seeds.list(), vec![3, 5]);
        assert_eq!(c.steps_for(EnvKind::Reacher), 1000);
        assert_eq!(c.steps_for(EnvKind::Pendulum), 150_000);
        assert_eq!(c.ppo.epochs, 3);
        assert_eq!(c.ppo.minibatch_size, 64);
        let again = BenchmarkConfig::from_toml(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(BenchmarkConfig::from_toml("bogus = 1").is_err());
        let c = BenchmarkConfig::from_toml("methods = [\"liu+caps\"]").unwrap();
        let err = c.validate().unwrap_err();
        assert_eq!(err.kind(), "usage");
        assert!(err.to_string().contains(METHOD_GRAMMAR));
        let c = BenchmarkConfig::from_toml("seeds = 0").unwrap();
        assert!(c.validate().is_err());
        let c = BenchmarkConfig::from_toml("seeds = [1, 1]").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_flag_forms() {
        assert_eq!(Seeds::parse("3").unwrap().list(), vec![0, 1, 2]);
        assert_eq!(Seeds::parse("4, 9").unwrap().list(), vec![4, 9]);
        assert!(Seeds::parse("x").is_err());
    }
}
