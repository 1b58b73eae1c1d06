use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Tape, Var};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::Tensor;

use super::lipsnet::{LipsNetActor, LipsNetSpec};
use super::liu::{LiuActor, LiuLipschitzSpec};
use super::mlp::{Mlp, MlpSpec};
use super::obs_norm::RunningMeanStd;
use super::params::{Binding, ParamSet};
use super::spectral::{LocalSnSpec, SpectralActor};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Architecture of the actor's mean network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchSpec {
    Plain { hidden: Vec<usize>, activation: Activation },
    LocalSn(LocalSnSpec),
    Liu(LiuLipschitzSpec),
    Lipsnet(LipsNetSpec),
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec::Plain { hidden: vec![64, 64], activation: Activation::Tanh }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub arch: ArchSpec,
    pub critic_hidden: Vec<usize>,
    pub log_std_init: f64,
}

impl PolicySpec {
    pub fn new(obs_dim: usize, act_dim: usize, arch: ArchSpec) -> Self {
        Self { obs_dim, act_dim, arch, critic_hidden: vec![64, 64], log_std_init: 0.0 }
    }
}

/// Output of the actor's mean network.
pub struct ActorOutput<'t> {
    /// Action means, `[B, act_dim]`.
    pub mean: Var<'t>,
    /// Local Lipschitz estimate `K(x)`, `[B, 1]` (LipsNet only).
    pub k: Option<Var<'t>>,
}

/// Common forward interface of the actor architectures.
pub trait MeanNetwork {
    fn forward<'t>(&self, params: &Binding<'t>, obs: Var<'t>) -> Result<ActorOutput<'t>>;
    fn check_params(&self, params: &ParamSet) -> Result<()>;
}

impl MeanNetwork for Mlp {
    fn forward<'t>(&self, params: &Binding<'t>, obs: Var<'t>) -> Result<ActorOutput<'t>> {
        Ok(ActorOutput { mean: Mlp::forward(self, params, obs)?, k: None })
    }
    fn check_params(&self, params: &ParamSet) -> Result<()> {
        Mlp::check_params(self, params)
    }
}

impl MeanNetwork for SpectralActor {
    fn forward<'t>(&self, params: &Binding<'t>, obs: Var<'t>) -> Result<ActorOutput<'t>> {
        Ok(ActorOutput { mean: SpectralActor::forward(self, params, obs)?, k: None })
    }
    fn check_params(&self, params: &ParamSet) -> Result<()> {
        self.mlp().check_params(params)
    }
}

impl MeanNetwork for LiuActor {
    fn forward<'t>(&self, params: &Binding<'t>, obs: Var<'t>) -> Result<ActorOutput<'t>> {
        Ok(ActorOutput { mean: LiuActor::forward(self, params, obs)?, k: None })
    }
    fn check_params(&self, params: &ParamSet) -> Result<()> {
        self.mlp().check_params(params)?;
        for (layer, &c) in self.c_indices().iter().enumerate() {
            if !params.value(c).is_finite() {
                return Err(Error::BadParameter { network: self.mlp().name().to_string(), layer });
            }
        }
        Ok(())
    }
}

impl MeanNetwork for LipsNetActor {
    fn forward<'t>(&self, params: &Binding<'t>, obs: Var<'t>) -> Result<ActorOutput<'t>> {
        let out = LipsNetActor::forward(self, params, obs)?;
        Ok(ActorOutput { mean: out.y, k: Some(out.k) })
    }
    fn check_params(&self, params: &ParamSet) -> Result<()> {
        self.f().check_params(params)?;
        self.k().check_params(params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActorNet {
    Plain(Mlp),
    LocalSn(SpectralActor),
    Liu(LiuActor),
    LipsNet(LipsNetActor),
}

impl ActorNet {
    fn as_dyn(&self) -> &dyn MeanNetworkDyn {
        match self {
            ActorNet::Plain(n) => n,
            ActorNet::LocalSn(n) => n,
            ActorNet::Liu(n) => n,
            ActorNet::LipsNet(n) => n,
        }
    }
}

// Object-safe shim over `MeanNetwork` (its method is generic over 't).
trait MeanNetworkDyn {
    fn forward_dyn<'t>(&self, params: &Binding<'t>, obs: Var<'t>) -> Result<ActorOutput<'t>>;
    fn check_dyn(&self, params: &ParamSet) -> Result<()>;
}

impl<T: MeanNetwork> MeanNetworkDyn for T {
    fn forward_dyn<'t>(&self, params: &Binding<'t>, obs: Var<'t>) -> Result<ActorOutput<'t>> {
        self.forward(params, obs)
    }
    fn check_dyn(&self, params: &ParamSet) -> Result<()> {
        self.check_params(params)
    }
}

impl MeanNetwork for ActorNet {
    fn forward<'t>(&self, params: &Binding<'t>, obs: Var<'t>) -> Result<ActorOutput<'t>> {
        self.as_dyn().forward_dyn(params, obs)
    }
    fn check_params(&self, params: &ParamSet) -> Result<()> {
        self.as_dyn().check_dyn(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    /// Sample from the Gaussian (training).
    Stochastic,
    /// Return the mean (evaluation).
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

/// Diagonal-Gaussian actor with a separate plain-MLP critic, plus the
/// observation normalizer both consume.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    spec: PolicySpec,
    params: ParamSet,
    actor: ActorNet,
    critic: Mlp,
    log_std: usize,
    pub obs_rms: RunningMeanStd,
}

impl ActorCritic {
    pub fn new(spec: PolicySpec, seed: u64) -> Result<Self> {
        if spec.obs_dim == 0 || spec.act_dim == 0 {
            return Err(Error::Config(format!("policy dimensions must be positive: {spec:?}")));
        }
        let mut rng = stream(seed, "init");
        let mut params = ParamSet::new();
        let (o, a) = (spec.obs_dim, spec.act_dim);
        let gain = 2f64.sqrt();
        let actor = match &spec.arch {
            ArchSpec::Plain { hidden, activation } => ActorNet::Plain(Mlp::build(
                "actor",
                MlpSpec::new(o, a, hidden.clone(), *activation),
                &mut params,
                &mut rng,
                gain,
                0.01,
            )?),
            ArchSpec::LocalSn(s) => {
                if !(s.delta > 0.0) {
                    return Err(Error::Config(format!("spectral delta must be > 0, got {}", s.delta)));
                }
                let mlp = Mlp::build(
                    "actor",
                    MlpSpec::new(o, a, s.hidden.clone(), s.activation),
                    &mut params,
                    &mut rng,
                    gain,
                    0.01,
                )?;
                ActorNet::LocalSn(SpectralActor::new(mlp, s.delta))
            }
            ArchSpec::Liu(s) => {
                if !(s.initial_bound > 0.0 && s.c_loss_weight >= 0.0) {
                    return Err(Error::Config(format!("invalid Liu-Lipschitz settings: {s:?}")));
                }
                let mlp = Mlp::build(
                    "actor",
                    MlpSpec::new(o, a, s.hidden.clone(), s.activation),
                    &mut params,
                    &mut rng,
                    gain,
                    0.01,
                )?;
                ActorNet::Liu(LiuActor::new(mlp, s, &mut params))
            }
            ArchSpec::Lipsnet(s) => ActorNet::LipsNet(LipsNetActor::build("actor", s, o, a, &mut params, &mut rng)?),
        };
        let critic = Mlp::build(
            "critic",
            MlpSpec::new(o, 1, spec.critic_hidden.clone(), Activation::Tanh),
            &mut params,
            &mut rng,
            gain,
            1.0,
        )?;
        let log_std = params.push("log_std", Tensor::filled(1, a, spec.log_std_init));
        Ok(Self { obs_rms: RunningMeanStd::new(o), spec, params, actor, critic, log_std })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn actor(&self) -> &ActorNet {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn log_std_index(&self) -> usize {
        self.log_std
    }

    pub fn check_params(&self) -> Result<()> {
        self.actor.check_params(&self.params)?;
        self.critic.check_params(&self.params)?;
        if !self.params.value(self.log_std).is_finite() {
            return Err(Error::BadParameter { network: "log_std".into(), layer: 0 });
        }
        Ok(())
    }

    /// Per-update hook: advances the spectral power iteration.
    pub fn before_update(&mut self) {
        if let ActorNet::LocalSn(sn) = &mut self.actor {
            sn.advance(&self.params);
        }
    }

    /// Converge the spectral estimate before saving.
    pub fn prepare_checkpoint(&mut self) {
        if let ActorNet::LocalSn(sn) = &mut self.actor {
            sn.converge(&self.params);
        }
    }

    pub fn actor_forward<'t>(&self, params: &Binding<'t>, obs: Var<'t>) -> Result<ActorOutput<'t>> {
        self.actor.forward(params, obs)
    }

    /// `[B, 1]` state values.
    pub fn value_forward<'t>(&self, params: &Binding<'t>, obs: Var<'t>) -> Result<Var<'t>> {
        self.critic.forward(params, obs)
    }

    /// Clamped log standard deviations, `[1, act_dim]`.
    pub fn log_std<'t>(&self, params: &Binding<'t>) -> Var<'t> {
        params.get(self.log_std).clamp(LOG_STD_MIN, LOG_STD_MAX)
    }

    pub fn normalize_obs(&self, obs: &[f64]) -> Vec<f64> {
        self.obs_rms.normalize(obs)
    }

    /// Act on a raw observation (normalized with the frozen statistics).
    pub fn act(&self, obs: &[f64], mode: ActMode, rng: &mut Rng) -> Result<ActOutput> {
        self.act_normalized(&self.normalize_obs(obs), mode, rng)
    }

    /// Act on an already normalized observation.
    pub fn act_normalized(&self, obs: &[f64], mode: ActMode, rng: &mut Rng) -> Result<ActOutput> {
        if obs.len() != self.spec.obs_dim {
            return Err(Error::Input(format!(
                "policy expects {}-dimensional observations, got {}",
                self.spec.obs_dim,
                obs.len()
            )));
        }
        let tape = Tape::new();
        let p = self.params.bind_constant(&tape);
        let x = tape.constant(Tensor::row(obs));
        let mean = self.actor.forward(&p, x)?.mean.value().into_data();
        let value = self.critic.forward(&p, x)?.item();
        tape.check_finite()?;
        let log_std: Vec<f64> =
            self.params.value(self.log_std).data().iter().map(|s| s.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        let action: Vec<f64> = match mode {
            ActMode::Deterministic => mean.clone(),
            ActMode::Stochastic => mean
                .iter()
                .zip(&log_std)
                .map(|(m, s)| {
                    let n: f64 = StandardNormal.sample(rng);
                    m + s.exp() * n
                })
                .collect(),
        };
        let log_prob = gaussian_log_density(&action, &mean, &log_std);
        Ok(ActOutput { action, log_prob, value })
    }

    /// Critic value of a normalized observation.
    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        let tape = Tape::new();
        let p = self.params.bind_constant(&tape);
        Ok(self.critic.forward(&p, tape.constant(Tensor::row(obs)))?.item())
    }

    pub fn to_checkpoint(&self, metadata: serde_json::Value) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(serde_json::json!({
            "policy": serde_json::to_value(&self.spec)?,
            "run": metadata,
        }));
        for (name, t) in self.params.iter() {
            ck.push(name, t);
        }
        if let ActorNet::LocalSn(sn) = &self.actor {
            ck.push("buffer.spectral_u", &Tensor::row(sn.u()));
        }
        let d = self.spec.obs_dim;
        ck.push("obs_rms.mean", &Tensor::row(&self.obs_rms.mean));
        ck.push("obs_rms.var", &Tensor::row(&self.obs_rms.var));
        ck.push("obs_rms.count", &Tensor::scalar(self.obs_rms.count));
        debug_assert_eq!(self.obs_rms.dim(), d);
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let spec: PolicySpec = serde_json::from_value(
            ck.metadata.get("policy").cloned().ok_or_else(|| Error::Checkpoint("missing policy spec".into()))?,
        )?;
        let mut ac = Self::new(spec, 0)?;
        for i in 0..ac.params.len() {
            let shape = ac.params.value(i).shape().to_vec();
            *ac.params.value_mut(i) = ck.tensor(ac.params.name(i), &shape)?;
        }
        if let ActorNet::LocalSn(sn) = &mut ac.actor {
            let n = sn.u().len();
            sn.set_u(ck.tensor("buffer.spectral_u", &[1, n])?.into_data());
        }
        let d = ac.spec.obs_dim;
        ac.obs_rms.mean = ck.tensor("obs_rms.mean", &[1, d])?.into_data();
        ac.obs_rms.var = ck.tensor("obs_rms.var", &[1, d])?.into_data();
        ac.obs_rms.count = ck.tensor("obs_rms.count", &[1, 1])?.item();
        Ok(ac)
    }
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_density(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), s)| {
            let z = (x - m) / s.exp();
            -0.5 * z * z - s - HALF_LN_2PI
        })
        .sum()
}

/// Per-row log-density of `actions [B, A]` under `N(mean, exp(log_std))`,
/// `[B, 1]`, on the tape.
pub fn gaussian_log_prob<'t>(mean: Var<'t>, log_std: Var<'t>, actions: Var<'t>) -> Var<'t> {
    let (b, a) = (mean.rows(), mean.cols());
    let inv_std = log_std.scale(-1.0).exp().expand_rows(b);
    let z = (actions - mean) * inv_std;
    let per_dim = z.square().scale(-0.5) - log_std.expand_rows(b);
    per_dim.sum_cols().add_scalar(-HALF_LN_2PI * a as f64)
}

/// Entropy of the diagonal Gaussian, `[1, 1]`.
pub fn gaussian_entropy<'t>(log_std: Var<'t>) -> Var<'t> {
    let a = log_std.cols() as f64;
    log_std.sum().add_scalar(a * (0.5 + HALF_LN_2PI))
}
