use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use smoothrl_core::checkpoint::Checkpoint;
use smoothrl_core::env::{write_action_trace, write_observation_trace, EnvKind};
use smoothrl_core::metrics::{eval_env_seed, evaluate, smoothness, write_spectrum_csv, TraceOptions};
use smoothrl_core::policies::ActorCritic;

use crate::config::{BenchmarkConfig, Seeds};
use crate::error::{BenchError, Result};
use crate::report::{load_records, write_report, ReportTable};
use crate::runner::run_benchmark;

#[derive(Debug, Parser)]
#[command(name = "smoothrl", version, about = "Train, evaluate and compare action-smoothing RL methods")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate a grid of runs, then write the report.
    Train(TrainArgs),
    /// Evaluate a checkpoint and print the result as JSON.
    Eval(EvalArgs),
    /// Rebuild the report from the records in a results directory.
    Report(ReportArgs),
    /// Write the action trace (and optionally spectrum) of one episode.
    Trace(TraceArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Environments, comma-separated.
    #[arg(long)]
    pub env: Option<String>,
    /// Methods, comma-separated.
    #[arg(long)]
    pub method: Option<String>,
    /// Seed count, or a comma-separated seed list.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Training steps for every selected environment.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Train with domain randomization.
    #[arg(long)]
    pub dr: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to the environment the checkpoint was trained on.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Action trace CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Spectrum CSV prefix; one file per action dimension.
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    /// Observation trace CSV.
    #[arg(long)]
    pub observations: Option<PathBuf>,
}

fn parse_env(s: &str) -> Result<EnvKind> {
    s.parse::<EnvKind>().map_err(|e| BenchError::Usage(e.to_string()))
}

fn split(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

impl TrainArgs {
    pub fn to_config(&self) -> Result<BenchmarkConfig> {
        let mut cfg = match &self.config {
            Some(p) => BenchmarkConfig::load(p)?,
            None => BenchmarkConfig::default(),
        };
        if let Some(e) = &self.env {
            cfg.envs = split(e).map(parse_env).collect::<Result<_>>()?;
        }
        if let Some(m) = &self.method {
            cfg.methods = split(m).map(str::to_string).collect();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = Seeds::parse(s)?;
        }
        if let Some(n) = self.steps {
            for env in cfg.envs.clone() {
                cfg.steps.insert(env, n);
            }
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if self.dr {
            cfg.domain_randomization = true;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(n) = self.eval_episodes {
            cfg.eval_episodes = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_policy(path: &Path, env: Option<&str>) -> Result<(ActorCritic, EnvKind)> {
    let ck = Checkpoint::load(path)?;
    let policy = ActorCritic::from_checkpoint(&ck)?;
    let env = match env {
        Some(e) => parse_env(e)?,
        None => {
            let stored = ck
                .metadata
                .pointer("/run/job/env")
                .and_then(|v| v.as_str())
                .ok_or_else(|| BenchError::Usage("checkpoint does not name its environment; pass --env".into()))?;
            parse_env(stored)?
        }
    };
    Ok((policy, env))
}

/// Run a parsed command, writing human output to `stdout` and progress to
/// `stderr`.
pub fn run(cli: Cli, stdout: &mut dyn std::io::Write, stderr: &mut (dyn std::io::Write + Send)) -> Result<()> {
    let io = |e: std::io::Error| BenchError::io(Path::new("<stdout>"), e);
    match cli.command {
        Command::Train(args) => {
            let cfg = args.to_config()?;
            let summary = run_benchmark(&cfg, |line| {
                let _ = writeln!(stderr, "{line}");
            })?;
            let records = load_records(&cfg.out)?;
            let methods: Vec<String> = cfg.method_specs()?.iter().map(|m| m.name()).collect();
            let envs: Vec<String> = cfg.envs.iter().map(|e| e.to_string()).collect();
            let table = ReportTable::build(&records, &envs, &methods);
            write_report(&cfg.out, &table, &records)?;
            write!(stdout, "{}", table.render_text()).map_err(io)?;
            writeln!(
                stdout,
                "trained {}, skipped {} (already complete), failed {}",
                summary.trained, summary.skipped, summary.failed
            )
            .map_err(io)?;
            if summary.failed > 0 {
                return Err(BenchError::Core(smoothrl_core::Error::Input(format!(
                    "{} run(s) failed; see {}",
                    summary.failed,
                    cfg.out.join(crate::runner::FAILURES_DIR).display()
                ))));
            }
        }
        Command::Eval(args) => {
            let (policy, env) = load_policy(&args.checkpoint, args.env.as_deref())?;
            let mut e = env.make(eval_env_seed(args.seed));
            let ev = evaluate(&policy, e.as_mut(), args.episodes, TraceOptions::default())?;
            let (rm, rs) = ev.return_stats();
            let (sm, ss) = ev.sm_stats();
            let json = serde_json::json!({
                "format_version": smoothrl_core::metrics::RECORD_FORMAT_VERSION,
                "env": env.name(),
                "episodes": args.episodes,
                "return_mean": rm, "return_std": rs,
                "sm_mean": sm, "sm_std": ss,
                "sm_per_dim": ev.sm_per_dim,
            });
            writeln!(stdout, "{json}").map_err(io)?;
        }
        Command::Report(args) => {
            let records = load_records(&args.out)?;
            if records.is_empty() {
                return Err(BenchError::Usage(format!("no records under {}", args.out.display())));
            }
            let table = ReportTable::from_records(&records);
            write_report(&args.out, &table, &records)?;
            write!(stdout, "{}", table.render_text()).map_err(io)?;
        }
        Command::Trace(args) => {
            let (policy, env) = load_policy(&args.checkpoint, args.env.as_deref())?;
            let mut e = env.make(eval_env_seed(args.seed));
            let opts = TraceOptions { actions: true, observations: args.observations.is_some() };
            let ev = evaluate(&policy, e.as_mut(), 1, opts)?;
            let actions = &ev.action_traces[0];
            write_action_trace(&args.out, actions)?;
            if let (Some(p), Some(obs)) = (&args.observations, ev.observation_traces.first()) {
                write_observation_trace(p, obs)?;
            }
            if let Some(prefix) = &args.spectrum {
                let spec = smoothness(actions, env.spec().sampling_frequency())?;
                for (d, dim) in spec.dims.iter().enumerate() {
                    let mut name = prefix.as_os_str().to_owned();
                    name.push(format!(".dim{d}.csv"));
                    write_spectrum_csv(Path::new(&name), dim)?;
                }
            }
            writeln!(
                stdout,
                "{}",
                serde_json::json!({ "return": ev.returns[0], "sm": ev.sms[0], "steps": actions.len() })
            )
            .map_err(io)?;
        }
    }
    Ok(())
}
