use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{DomainRandomizationConfig, EnvKind};
use crate::error::Result;
use crate::policies::{ActorCritic, PolicySpec};
use crate::regularizers::MethodSpec;
use crate::rng::stream;

use super::{ppo_update, Adam, PpoConfig, RewardScaler, RolloutCollector, UpdateStats};

pub const CURVE_HEADER: &str = "step,mean_episode_return,loss_total,loss_rl,loss_reg";

/// Episodes averaged into each curve point.
const RETURN_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub env: EnvKind,
    pub method: MethodSpec,
    pub seed: u64,
    pub ppo: PpoConfig,
    /// Domain randomization during training; evaluation is unaffected.
    pub domain_randomization: Option<DomainRandomizationConfig>,
    pub critic_hidden: Vec<usize>,
}

impl TrainConfig {
    pub fn new(env: EnvKind, method: MethodSpec, seed: u64) -> Self {
        Self { env, method, seed, ppo: PpoConfig::default(), domain_randomization: None, critic_hidden: vec![64, 64] }
    }

    pub fn policy_spec(&self) -> PolicySpec {
        let spec = self.env.spec();
        let mut p = PolicySpec::new(spec.observation_dim, spec.action_dim, self.method.arch.clone());
        p.critic_hidden = self.critic_hidden.clone();
        p
    }
}

/// One training-curve point, logged after each update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub step: usize,
    /// Mean raw return of the last few completed episodes; NaN before any.
    pub mean_episode_return: f64,
    pub loss_total: f64,
    pub loss_rl: f64,
    pub loss_reg: f64,
}

impl CurveRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?}",
            self.step, self.mean_episode_return, self.loss_total, self.loss_rl, self.loss_reg
        )
    }
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{CURVE_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    out.flush()?;
    Ok(())
}

pub struct TrainOutcome {
    /// Trained policy with its spectral estimate converged.
    pub policy: ActorCritic,
    pub curve: Vec<CurveRow>,
    pub updates: Vec<UpdateStats>,
}

/// Train one (environment, method, seed) run. `on_update` sees every curve
/// row as it is produced.
pub fn train(cfg: &TrainConfig, mut on_update: impl FnMut(&CurveRow)) -> Result<TrainOutcome> {
    cfg.ppo.validate()?;
    cfg.method.validate()?;
    let seed = cfg.seed;
    let mut policy = ActorCritic::new(cfg.policy_spec(), seed)?;
    let env = cfg.env.make_with(seed, cfg.domain_randomization.as_ref())?;
    let mut collector = RolloutCollector::new(env);
    collector.bootstrap_timeouts = cfg.ppo.bootstrap_timeouts;
    if cfg.ppo.normalize_rewards {
        collector.reward_scaler = Some(RewardScaler::new(cfg.ppo.gamma));
    }
    let mut adam = Adam::new(policy.params().values(), cfg.ppo.learning_rate, cfg.ppo.adam_eps);
    let mut action_rng = stream(seed, "action");
    let mut shuffle_rng = stream(seed, "minibatch");
    let mut reg_rng = stream(seed, "reg");

    let mut recent: VecDeque<f64> = VecDeque::with_capacity(RETURN_WINDOW);
    let mut curve = Vec::new();
    let mut updates = Vec::new();
    let mut step = 0;
    while step < cfg.ppo.total_steps {
        let length = cfg.ppo.rollout_length.min(cfg.ppo.total_steps - step);
        let traj = collector.collect(&mut policy, length, &mut action_rng)?;
        step += length;
        for &r in &traj.episode_returns {
            if recent.len() == RETURN_WINDOW {
                recent.pop_front();
            }
            recent.push_back(r);
        }
        let stats = ppo_update(
            &mut policy,
            &mut adam,
            &traj,
            &cfg.ppo,
            &cfg.method,
            updates.len(),
            &mut shuffle_rng,
            &mut reg_rng,
        )?;
        let mean_episode_return =
            if recent.is_empty() { f64::NAN } else { recent.iter().sum::<f64>() / recent.len() as f64 };
        let row = CurveRow {
            step,
            mean_episode_return,
            loss_total: stats.loss_total,
            loss_rl: stats.loss_rl,
            loss_reg: stats.loss_reg,
        };
        on_update(&row);
        curve.push(row);
        updates.push(stats);
    }
    policy.prepare_checkpoint();
    Ok(TrainOutcome { policy, curve, updates })
}
