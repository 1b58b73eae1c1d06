//! Grid execution: one job per (env, method, seed), run on a worker pool.
//! Every output file is written by atomic rename, so an interrupted grid
//! leaves only whole files behind and a rerun skips finished jobs.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smoothrl_core::checkpoint::write_atomic;
use smoothrl_core::env::{DomainRandomizationConfig, EnvKind};
use smoothrl_core::metrics::{eval_env_seed, evaluate, RunRecord, TraceOptions, RECORD_FORMAT_VERSION};
use smoothrl_core::ppo::{train, PpoConfig, TrainConfig, CURVE_HEADER};
use smoothrl_core::regularizers::MethodSpec;

use crate::config::BenchmarkConfig;
use crate::error::{BenchError, Result};

pub const RECORDS_DIR: &str = "records";
pub const FAILURES_DIR: &str = "failures";
pub const CURVES_DIR: &str = "curves";
pub const CHECKPOINTS_DIR: &str = "checkpoints";

/// Everything that determines one run's result; its hash keys resumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub format_version: u32,
    pub env: EnvKind,
    pub method: MethodSpec,
    pub seed: u64,
    pub ppo: PpoConfig,
    pub critic_hidden: Vec<usize>,
    pub domain_randomization: Option<DomainRandomizationConfig>,
    pub eval_episodes: usize,
}

impl JobSpec {
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("job spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// File stem shared by all of this job's outputs.
    pub fn key(&self) -> String {
        format!("{}__{}__seed{}", self.env, self.method.name(), self.seed)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            env: self.env,
            method: self.method.clone(),
            seed: self.seed,
            ppo: self.ppo.clone(),
            domain_randomization: self.domain_randomization.clone(),
            critic_hidden: self.critic_hidden.clone(),
        }
    }
}

pub fn jobs(cfg: &BenchmarkConfig) -> Result<Vec<JobSpec>> {
    cfg.validate()?;
    let methods = cfg.method_specs()?;
    let mut out = Vec::new();
    for &env in &cfg.envs {
        for method in &methods {
            for seed in cfg.seeds.list() {
                out.push(JobSpec {
                    format_version: RECORD_FORMAT_VERSION,
                    env,
                    method: method.clone(),
                    seed,
                    ppo: PpoConfig { total_steps: cfg.steps_for(env), ..cfg.ppo.clone() },
                    critic_hidden: cfg.critic_hidden.clone(),
                    domain_randomization: cfg.domain_randomization.then(|| cfg.dr.clone()),
                    eval_episodes: cfg.eval_episodes,
                });
            }
        }
    }
    Ok(out)
}

/// Failure left in `failures/` for a job that errored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub format_version: u32,
    pub env: String,
    pub method: String,
    pub seed: u64,
    pub config_hash: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GridSummary {
    pub trained: usize,
    pub skipped: usize,
    pub failed: usize,
}

pub fn record_path(out: &Path, key: &str) -> PathBuf {
    out.join(RECORDS_DIR).join(format!("{key}.jsonl"))
}

fn failure_path(out: &Path, key: &str) -> PathBuf {
    out.join(FAILURES_DIR).join(format!("{key}.jsonl"))
}

/// A finished record whose hash matches `job`, if any.
pub fn existing_record(out: &Path, job: &JobSpec) -> Option<RunRecord> {
    let text = std::fs::read_to_string(record_path(out, &job.key())).ok()?;
    let rec: RunRecord = serde_json::from_str(text.trim()).ok()?;
    (rec.config_hash == job.hash()).then_some(rec)
}

fn write_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut line = serde_json::to_string(value)?;
    line.push('\n');
    write_atomic(path, line.as_bytes()).map_err(BenchError::from)
}

/// Train and evaluate one job, writing its curve, checkpoint and record.
pub fn run_job(out: &Path, job: &JobSpec) -> Result<RunRecord> {
    let key = job.key();
    let outcome = train(&job.train_config(), |_| {})?;

    let curve_rel = format!("{CURVES_DIR}/{key}.csv");
    let mut csv = String::from(CURVE_HEADER);
    csv.push('\n');
    for row in &outcome.curve {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    write_atomic(&out.join(&curve_rel), csv.as_bytes())?;

    let ck_rel = format!("{CHECKPOINTS_DIR}/{key}.json");
    let ck = outcome.policy.to_checkpoint(serde_json::json!({ "job": job, "config_hash": job.hash() }))?;
    let ck_json = ck.to_json()?;
    write_atomic(&out.join(&ck_rel), ck_json.as_bytes())?;

    let mut env = job.env.make(eval_env_seed(job.seed));
    let eval = evaluate(&outcome.policy, &mut env, job.eval_episodes, TraceOptions::default())?;
    let (return_mean, return_std) = eval.return_stats();
    let (sm_mean, sm_std) = eval.sm_stats();
    let record = RunRecord {
        format_version: RECORD_FORMAT_VERSION,
        method: job.method.name(),
        env: job.env.to_string(),
        seed: job.seed,
        train_steps: job.ppo.total_steps,
        return_mean,
        return_std,
        sm_mean,
        sm_std,
        sm_per_dim: eval.sm_per_dim,
        episodes: job.eval_episodes,
        training_curve: curve_rel,
        checkpoint: ck_rel,
        checkpoint_sha256: hex::encode(Sha256::digest(ck_json.as_bytes())),
        config_hash: job.hash(),
    };
    record.validate()?;
    write_line(&record_path(out, &key), &record)?;
    Ok(record)
}

/// Run every job not already finished. Individual failures are recorded in
/// `failures/` and do not stop the grid.
pub fn run_benchmark(cfg: &BenchmarkConfig, mut progress: impl FnMut(&str) + Send) -> Result<GridSummary> {
    let all = jobs(cfg)?;
    let out = cfg.out.as_path();
    for dir in [RECORDS_DIR, FAILURES_DIR, CURVES_DIR, CHECKPOINTS_DIR] {
        let p = out.join(dir);
        std::fs::create_dir_all(&p).map_err(|e| BenchError::io(&p, e))?;
    }
    let config_text = toml::to_string(cfg).map_err(|e| BenchError::Config(e.to_string()))?;
    write_atomic(&out.join("config.toml"), config_text.as_bytes())?;

    let (done, pending): (Vec<_>, Vec<_>) = all.into_iter().partition(|j| existing_record(out, j).is_some());
    let trained = AtomicUsize::new(0);
    let failed = AtomicUsize::new(0);
    let progress = std::sync::Mutex::new(&mut progress);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    pool.install(|| {
        pending.par_iter().try_for_each(|job| -> Result<()> {
            let key = job.key();
            match run_job(out, job) {
                Ok(rec) => {
                    let _ = std::fs::remove_file(failure_path(out, &key));
                    trained.fetch_add(1, Ordering::Relaxed);
                    (progress.lock().unwrap())(&format!(
                        "{key}: return {:.2} ± {:.2}, Sm {:.5} ± {:.5}",
                        rec.return_mean, rec.return_std, rec.sm_mean, rec.sm_std
                    ));
                }
                Err(e) => {
                    failed.fetch_add(1, Ordering::Relaxed);
                    let f = FailureRecord {
                        format_version: RECORD_FORMAT_VERSION,
                        env: job.env.to_string(),
                        method: job.method.name(),
                        seed: job.seed,
                        config_hash: job.hash(),
                        error: e.to_string(),
                    };
                    write_line(&failure_path(out, &key), &f)?;
                    (progress.lock().unwrap())(&format!("{key}: FAILED: {e}"));
                }
            }
            Ok(())
        })
    })?;
    Ok(GridSummary { trained: trained.into_inner(), skipped: done.len(), failed: failed.into_inner() })
}
