//! Evaluation metrics: cumulative return and spectral smoothness.
//!
//! Smoothness of a length-`N` action trace sampled at `f_s` uses the one-sided
//! amplitude spectrum: `M_i = 2|X_i|/N` for `0 < i < N/2`, `|X_i|/N` at the
//! Nyquist bin, DC excluded, at frequencies `f_i = i f_s / N` for
//! `i = 1..=n`, `n = ⌊N/2⌋`. Then `Sm = 2/(n f_s) · Σ M_i f_i`. With this
//! normalization a zero-mean trace satisfies
//! `var(x) = ½ Σ_{i<N/2} M_i² + M_{N/2}²`. Since `f_i` scales with `f_s`,
//! `Sm` depends only on the sample sequence.

use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::policies::{ActMode, ActorCritic};
use crate::rng::stream;

pub const MIN_TRACE_LEN: usize = 8;
pub const RECORD_FORMAT_VERSION: u32 = 1;

/// Evaluation environments are seeded apart from training environments.
pub fn eval_env_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSpectrum {
    /// `(f_i [Hz], M_i)` for `i = 1..=n`.
    pub bands: Vec<(f64, f64)>,
    pub sm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessSpectrum {
    pub f_s: f64,
    /// Number of bands per dimension.
    pub n: usize,
    pub dims: Vec<DimensionSpectrum>,
    /// Mean of the per-dimension values.
    pub sm: f64,
}

/// Spectrum and `Sm` of a single scalar trace.
pub fn smoothness_1d(trace: &[f64], f_s: f64) -> Result<DimensionSpectrum> {
    let n_samples = trace.len();
    if n_samples < MIN_TRACE_LEN {
        return Err(Error::Input(format!("smoothness needs at least {MIN_TRACE_LEN} samples, got {n_samples}")));
    }
    if let Some(x) = trace.iter().find(|x| !x.is_finite()) {
        return Err(Error::Input(format!("non-finite trace value {x}")));
    }
    if !(f_s > 0.0 && f_s.is_finite()) {
        return Err(Error::Input(format!("sampling frequency must be positive, got {f_s}")));
    }
    // Shifting by the first sample leaves every non-DC bin unchanged and makes
    // a constant trace transform to exact zeros.
    let x0 = trace[0];
    let mut buf: Vec<Complex<f64>> = trace.iter().map(|&x| Complex::new(x - x0, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n_samples).process(&mut buf);

    let nf = n_samples as f64;
    let n = n_samples / 2;
    let bands: Vec<(f64, f64)> = (1..=n)
        .map(|i| {
            let weight = if 2 * i == n_samples { 1.0 } else { 2.0 };
            (i as f64 * f_s / nf, weight * buf[i].norm() / nf)
        })
        .collect();
    let weighted: f64 = bands.iter().map(|(f, m)| m * f).sum();
    Ok(DimensionSpectrum { sm: 2.0 / (n as f64 * f_s) * weighted, bands })
}

/// `Sm` of a multi-dimensional trace (`trace[t][d]`), averaged across
/// dimensions.
pub fn smoothness(trace: &[Vec<f64>], f_s: f64) -> Result<SmoothnessSpectrum> {
    let dims = trace.first().map_or(0, Vec::len);
    if dims == 0 {
        return Err(Error::Input("empty action trace".into()));
    }
    if trace.iter().any(|a| a.len() != dims) {
        return Err(Error::Input("action trace rows differ in length".into()));
    }
    let per_dim = (0..dims)
        .map(|d| smoothness_1d(&trace.iter().map(|a| a[d]).collect::<Vec<_>>(), f_s))
        .collect::<Result<Vec<_>>>()?;
    let sm = per_dim.iter().map(|d| d.sm).sum::<f64>() / dims as f64;
    Ok(SmoothnessSpectrum { f_s, n: trace.len() / 2, dims: per_dim, sm })
}

/// CSV `freq_hz,amplitude`.
pub fn write_spectrum_csv(path: &Path, spectrum: &DimensionSpectrum) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "freq_hz,amplitude")?;
    for (f, m) in &spectrum.bands {
        writeln!(out, "{f:?},{m:?}")?;
    }
    out.flush()?;
    Ok(())
}

/// `C = Σ R_t`, summed in order.
pub fn cumulative_return(rewards: &[f64]) -> f64 {
    rewards.iter().sum()
}

/// Mean and sample (n − 1) standard deviation; a single value has std 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub returns: Vec<f64>,
    pub sms: Vec<f64>,
    /// Per-dimension `Sm` averaged over episodes.
    pub sm_per_dim: Vec<f64>,
    /// Executed actions per episode, when requested.
    pub action_traces: Vec<Vec<Vec<f64>>>,
    /// Observations per episode, when requested.
    pub observation_traces: Vec<Vec<Vec<f64>>>,
}

impl Evaluation {
    pub fn return_stats(&self) -> (f64, f64) {
        mean_std(&self.returns)
    }

    pub fn sm_stats(&self) -> (f64, f64) {
        mean_std(&self.sms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TraceOptions {
    pub actions: bool,
    pub observations: bool,
}

/// Run `episodes` deterministic episodes. The smoothness trace is the action
/// the environment executes (the policy mean clipped to the action bound).
pub fn evaluate(
    policy: &ActorCritic,
    env: &mut dyn Environment,
    episodes: usize,
    traces: TraceOptions,
) -> Result<Evaluation> {
    let spec = env.spec();
    if spec.observation_dim != policy.spec().obs_dim || spec.action_dim != policy.spec().act_dim {
        return Err(Error::Input(format!(
            "policy is {}→{} but the environment is {}→{}",
            policy.spec().obs_dim,
            policy.spec().act_dim,
            spec.observation_dim,
            spec.action_dim
        )));
    }
    if episodes == 0 {
        return Err(Error::Input("evaluation needs at least one episode".into()));
    }
    let f_s = spec.sampling_frequency();
    // Deterministic mode never draws; the generator only satisfies the signature.
    let mut rng = stream(0, "eval");
    let mut out = Evaluation {
        returns: Vec::with_capacity(episodes),
        sms: Vec::with_capacity(episodes),
        sm_per_dim: vec![0.0; spec.action_dim],
        action_traces: Vec::new(),
        observation_traces: Vec::new(),
    };
    for _ in 0..episodes {
        let mut obs = env.reset();
        let mut rewards = Vec::with_capacity(spec.episode_length);
        let mut actions = Vec::with_capacity(spec.episode_length);
        let mut observations = Vec::new();
        for step in 0..spec.episode_length {
            if traces.observations {
                observations.push(obs.clone());
            }
            let act = policy.act(&obs, ActMode::Deterministic, &mut rng)?;
            let executed: Vec<f64> =
                act.action.iter().map(|a| a.clamp(-spec.action_bound, spec.action_bound)).collect();
            let r = env.step(&executed).map_err(|e| Error::Env { step, source: Box::new(e) })?;
            rewards.push(r.reward);
            actions.push(executed);
            obs = r.observation;
            if r.done {
                break;
            }
        }
        let spectrum = smoothness(&actions, f_s)?;
        for (acc, d) in out.sm_per_dim.iter_mut().zip(&spectrum.dims) {
            *acc += d.sm / episodes as f64;
        }
        out.returns.push(cumulative_return(&rewards));
        out.sms.push(spectrum.sm);
        if traces.actions {
            out.action_traces.push(actions);
        }
        if traces.observations {
            out.observation_traces.push(observations);
        }
    }
    Ok(out)
}

/// Result of one (environment, method, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    pub method: String,
    pub env: String,
    pub seed: u64,
    pub train_steps: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub sm_mean: f64,
    pub sm_std: f64,
    pub sm_per_dim: Vec<f64>,
    pub episodes: usize,
    pub training_curve: String,
    pub checkpoint: String,
    pub checkpoint_sha256: String,
    /// Hash of everything that determines this run's result.
    pub config_hash: String,
}

impl RunRecord {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || !(self.return_std >= 0.0) || !(self.sm_std >= 0.0) {
            return Err(Error::Input(format!("invalid run record for {} / {} / {}", self.env, self.method, self.seed)));
        }
        Ok(())
    }
}
