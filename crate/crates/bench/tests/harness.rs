use std::collections::BTreeMap;
use std::path::Path;

use smoothrl_bench::runner::{jobs, record_path, FAILURES_DIR};
use smoothrl_bench::{load_records, run_benchmark, BenchmarkConfig, Seeds};
use smoothrl_core::env::EnvKind;

fn small(out: &Path, methods: &[&str], seeds: u64) -> BenchmarkConfig {
    BenchmarkConfig {
        methods: methods.iter().map(|s| s.to_string()).collect(),
        seeds: Seeds::Count(seeds),
        steps: BTreeMap::from([(EnvKind::Pendulum, 512)]),
        eval_episodes: 2,
        out: out.to_path_buf(),
        ..BenchmarkConfig::default()
    }
}

#[test]
fn grid_cardinality_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), &["vanilla"], 2);
    let s = run_benchmark(&cfg, |_| {}).unwrap();
    assert_eq!((s.trained, s.skipped, s.failed), (2, 0, 0));
    assert_eq!(load_records(dir.path()).unwrap().len(), 2);

    let s = run_benchmark(&cfg, |_| {}).unwrap();
    assert_eq!((s.trained, s.skipped, s.failed), (0, 2, 0));

    // A changed configuration invalidates the old records.
    let mut changed = cfg.clone();
    changed.eval_episodes = 3;
    let s = run_benchmark(&changed, |_| {}).unwrap();
    assert_eq!((s.trained, s.skipped), (2, 0));
}

#[test]
fn failed_job_is_recorded_and_grid_continues() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), &["vanilla"], 2);
    let blocked = &jobs(&cfg).unwrap()[0];
    // A directory where the record file should go makes the final write fail.
    std::fs::create_dir_all(record_path(dir.path(), &blocked.key())).unwrap();
    let s = run_benchmark(&cfg, |_| {}).unwrap();
    assert_eq!((s.trained, s.failed), (1, 1));
    let failure = dir.path().join(FAILURES_DIR).join(format!("{}.jsonl", blocked.key()));
    let f: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(failure).unwrap()).unwrap();
    assert_eq!(f["seed"], blocked.seed);
    assert_eq!(f["config_hash"], blocked.hash());
    assert!(!f["error"].as_str().unwrap().is_empty());
}

#[test]
fn grids_are_deterministic_across_output_dirs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let mut cfg = small(d.path(), &["vanilla", "caps"], 1);
        cfg.workers = 2;
        run_benchmark(&cfg, |_| {}).unwrap();
    }
    let ra = load_records(a.path()).unwrap();
    let rb = load_records(b.path()).unwrap();
    assert_eq!(ra.len(), 2);
    assert_eq!(ra, rb);
    for sub in ["records", "curves", "checkpoints"] {
        for entry in std::fs::read_dir(a.path().join(sub)).unwrap() {
            let p = entry.unwrap().path();
            let q = b.path().join(sub).join(p.file_name().unwrap());
            assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap(), "{}", p.display());
        }
    }
}
