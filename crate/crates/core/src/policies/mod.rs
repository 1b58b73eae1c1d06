//! Actor-critic networks and the Lipschitz-constrained actor variants.
//!
//! The actor's mean network is one of four architectures behind the
//! [`MeanNetwork`] interface: a plain MLP, an MLP whose output layer is
//! spectrally normalized, an MLP with learnable per-layer ∞-norm bounds, and a
//! Jacobian-normalized network scaled by a learned `K(x)`. The critic is always
//! a plain MLP.

mod lipsnet;
mod liu;
mod mlp;
mod obs_norm;
mod params;
mod policy;
mod spectral;


pub use lipsnet::{lipsnet_k_loss, LipsNetActor, LipsNetOutput, LipsNetSpec};
pub use liu::{liu_loss, liu_normalize, liu_normalize_layer, LiuActor, LiuLipschitzSpec};
pub use mlp::{orthogonal, Layer, Mlp, MlpSpec};
pub use obs_norm::RunningMeanStd;
pub use params::{Binding, ParamSet};
pub use policy::{
    gaussian_entropy, gaussian_log_density, gaussian_log_prob, ActMode, ActOutput, ActorCritic, ActorNet, ActorOutput,
    ArchSpec, MeanNetwork, PolicySpec, LOG_STD_MAX, LOG_STD_MIN,
};
pub use spectral::{
    converge, initial_vector, power_step, sigma_estimate, spectral_normalize, LocalSnSpec, SpectralActor,
    CHECKPOINT_POWER_ITERS,
};
