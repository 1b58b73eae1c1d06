use rand::Rng as _;

use super::update::clipped_surrogate;
use super::*;
use crate::autodiff::Tape;
use crate::env::EnvKind;
use crate::policies::{ActorCritic, PolicySpec};
use crate::regularizers::MethodSpec;
use crate::rng::stream;
use crate::tensor::Tensor;

fn traj_from(rewards: &[f64], values: &[f64], dones: &[bool], terminal: &[f64], bootstrap: f64) -> Trajectory {
    let n = rewards.len();
    Trajectory {
        observations: vec![vec![0.0]; n],
        next_observations: vec![vec![0.0]; n],
        actions: vec![vec![0.0]; n],
        rewards: rewards.to_vec(),
        raw_rewards: rewards.to_vec(),
        dones: dones.to_vec(),
        values: values.to_vec(),
        log_probs: vec![0.0; n],
        terminal_values: terminal.to_vec(),
        bootstrap_value: bootstrap,
        episode_returns: Vec::new(),
    }
}

/// Direct double sum: `A_t = Σ_{k ≥ 0} (γλ)^k δ_{t+k}`, stopping after the
/// first episode end.
fn gae_oracle(t: &Trajectory, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = t.len();
    let delta = |i: usize| {
        let next = if t.dones[i] {
            t.terminal_values[i]
        } else if i + 1 < n {
            t.values[i + 1]
        } else {
            t.bootstrap_value
        };
        t.rewards[i] + gamma * next - t.values[i]
    };
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for k in 0..n - i {
                acc += (gamma * lambda).powi(k as i32) * delta(i + k);
                if t.dones[i + k] {
                    break;
                }
            }
            acc
        })
        .collect()
}

#[test]
fn gae_single_step() {
    let t = traj_from(&[1.0], &[0.0], &[false], &[0.0], 0.0);
    let g = compute_gae(&t, 0.99, 0.95);
    assert_eq!(g.advantages, vec![1.0]);
    assert_eq!(g.returns, vec![1.0]);
}

#[test]
fn gae_zero_rewards_and_values() {
    let t = traj_from(&[0.0; 7], &[0.0; 7], &[false, false, true, false, false, false, true], &[0.0; 7], 0.0);
    assert!(compute_gae(&t, 0.99, 0.95).advantages.iter().all(|&a| a == 0.0));
}

#[test]
fn gae_matches_direct_summation() {
    let mut rng = stream(4, "t");
    for case in 0..50 {
        let n = rng.random_range(1..80);
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        let terminal: Vec<f64> =
            dones.iter().map(|&d| if d && case % 2 == 0 { rng.random_range(-5.0..5.0) } else { 0.0 }).collect();
        let t = traj_from(&rewards, &values, &dones, &terminal, rng.random_range(-5.0..5.0));
        let (gamma, lambda) = (rng.random_range(0.8..1.0), rng.random_range(0.0..1.0));
        let g = compute_gae(&t, gamma, lambda);
        for (a, b) in g.advantages.iter().zip(gae_oracle(&t, gamma, lambda)) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        for i in 0..n {
            assert_eq!(g.returns[i], g.advantages[i] + values[i]);
        }
    }
}

#[test]
fn advantage_normalization() {
    let a = normalize_advantages(&[1.0, 2.0, 3.0, 10.0]);
    let mean = a.iter().sum::<f64>() / 4.0;
    let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
    assert!(mean.abs() < 1e-12);
    assert!((var - 1.0).abs() < 1e-6);
}

#[test]
fn surrogate_identities() {
    let tape = Tape::new();
    let adv = [0.5, -1.0, 2.0];
    let a = tape.constant(Tensor::column(&adv));
    let ones = tape.constant(Tensor::column(&[1.0; 3]));
    let l = clipped_surrogate(ones, a, 0.2).item();
    assert!((l + adv.iter().sum::<f64>() / 3.0).abs() < 1e-15);

    let r = tape.constant(Tensor::column(&[1.5]));
    let pos = tape.constant(Tensor::column(&[2.0]));
    assert!((clipped_surrogate(r, pos, 0.2).item() + 1.2 * 2.0).abs() < 1e-15);
    // Negative advantage keeps the unclipped, more pessimistic term.
    let neg = tape.constant(Tensor::column(&[-2.0]));
    assert!((clipped_surrogate(r, neg, 0.2).item() - 1.5 * 2.0).abs() < 1e-15);
}

#[test]
fn config_invariants() {
    PpoConfig::default().validate().unwrap();
    for f in [
        |c: &mut PpoConfig| c.gamma = 0.0,
        |c: &mut PpoConfig| c.gamma = 1.01,
        |c: &mut PpoConfig| c.clip_ratio = 1.0,
        |c: &mut PpoConfig| c.clip_ratio = 0.0,
        |c: &mut PpoConfig| c.minibatch_size = 0,
    ] {
        let mut c = PpoConfig::default();
        f(&mut c);
        assert!(c.validate().is_err());
    }
}

#[test]
fn adam_first_step_is_signed_lr() {
    let mut p = vec![Tensor::row(&[1.0, -2.0, 0.0])];
    let g = vec![Tensor::row(&[0.3, -4.0, 0.0])];
    let mut adam = Adam::new(&p, 0.1, 1e-8);
    adam.step(&mut p, &g);
    let want = [1.0 - 0.1 * 0.3 / (0.3 + 1e-8), -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 0.0];
    for (a, b) in p[0].data().iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(adam.steps(), 1);
}

#[test]
fn grad_clipping_bounds_norm() {
    let mut g = vec![Tensor::row(&[3.0, 4.0]), Tensor::row(&[12.0])];
    assert_eq!(clip_grad_norm(&mut g, 0.5), 13.0);
    let n = g.iter().flat_map(|t| t.data()).map(|x| x * x).sum::<f64>().sqrt();
    assert!(n <= 0.5 && n > 0.4999);
    let mut small = vec![Tensor::row(&[0.1])];
    clip_grad_norm(&mut small, 0.5);
    assert_eq!(small[0].data(), &[0.1]);
}

fn pendulum_policy(method: &MethodSpec, seed: u64) -> ActorCritic {
    ActorCritic::new(PolicySpec::new(3, 1, method.arch.clone()), seed).unwrap()
}

#[test]
fn rollout_bookkeeping() {
    let mut ac = pendulum_policy(&MethodSpec::vanilla(), 0);
    let t = collect_rollout(&mut ac, EnvKind::Pendulum.make(1), 200, &mut stream(0, "action")).unwrap();
    assert_eq!(t.len(), 200);
    assert_eq!(t.dones.iter().filter(|d| **d).count(), 1);
    assert!(t.dones[199]);
    assert_eq!(t.episode_returns.len(), 1);
    assert_eq!(t.episode_returns[0], t.raw_rewards.iter().sum::<f64>());
    assert_eq!(t.rewards, t.raw_rewards);
    // The time limit is a truncation: the final state's value is kept.
    assert_eq!(t.terminal_values[199], ac.value(&t.next_observations[199]).unwrap());
    assert_ne!(t.terminal_values[199], 0.0);

    let mut ac = pendulum_policy(&MethodSpec::vanilla(), 0);
    let mut c = RolloutCollector::new(EnvKind::Pendulum.make(1));
    c.bootstrap_timeouts = false;
    let t = c.collect(&mut ac, 200, &mut stream(0, "action")).unwrap();
    assert_eq!(t.terminal_values[199], 0.0);

    // Episodes continue across rollout boundaries.
    let mut ac = pendulum_policy(&MethodSpec::vanilla(), 0);
    let mut c = RolloutCollector::new(EnvKind::Pendulum.make(1));
    let a = c.collect(&mut ac, 150, &mut stream(0, "action")).unwrap();
    assert!(a.episode_returns.is_empty());
    let b = c.collect(&mut ac, 250, &mut stream(0, "action")).unwrap();
    assert_eq!(b.episode_returns.len(), 2);
    assert!(b.dones[49] && b.dones[249]);
}

#[test]
fn rollout_is_deterministic() {
    let run = || {
        let spec = EnvKind::Reacher.spec();
        let mut ac =
            ActorCritic::new(PolicySpec::new(spec.observation_dim, spec.action_dim, Default::default()), 3).unwrap();
        collect_rollout(&mut ac, EnvKind::Reacher.make(3), 300, &mut stream(3, "action")).unwrap()
    };
    assert_eq!(run(), run());
}

fn tiny(method: &str, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(EnvKind::Pendulum, method.parse().unwrap(), seed);
    cfg.ppo.total_steps = 512;
    cfg.ppo.rollout_length = 256;
    cfg.ppo.epochs = 2;
    cfg
}

fn params_of(cfg: &TrainConfig) -> Vec<Tensor> {
    train(cfg, |_| {}).unwrap().policy.params().values().to_vec()
}

#[test]
fn training_is_reproducible() {
    let cfg = tiny("vanilla", 7);
    assert_eq!(params_of(&cfg), params_of(&cfg));
    let mut other = cfg.clone();
    other.seed = 8;
    assert_ne!(params_of(&cfg), params_of(&other));
}

#[test]
fn zero_weight_regularizers_reproduce_vanilla() {
    let vanilla = params_of(&tiny("vanilla", 2));
    let mut caps = tiny("caps", 2);
    caps.method.caps.lambda_t = 0.0;
    caps.method.caps.lambda_s = 0.0;
    assert_eq!(params_of(&caps), vanilla);
    let mut l2c2 = tiny("l2c2", 2);
    l2c2.method.l2c2.lambda_pi = 0.0;
    l2c2.method.l2c2.lambda_v = 0.0;
    assert_eq!(params_of(&l2c2), vanilla);
    // Active weights do change the result.
    assert_ne!(params_of(&tiny("caps", 2)), vanilla);
}

#[test]
fn update_stats_decompose() {
    let cfg = tiny("lipsnet+caps", 1);
    let out = train(&cfg, |_| {}).unwrap();
    for (s, row) in out.updates.iter().zip(&out.curve) {
        assert!(s.decomposition_error < 1e-10);
        assert!((s.loss_total - (s.loss_rl + s.loss_reg)).abs() < 1e-10);
        let terms: Vec<_> = s.reg_terms.keys().cloned().collect();
        assert_eq!(terms, ["caps", "lipsnet_k"]);
        assert_eq!(row.loss_total, s.loss_total);
    }
    assert_eq!(out.curve.last().unwrap().step, 512);
    assert!(out.curve.iter().all(|r| r.mean_episode_return.is_finite()));

    let vanilla = train(&tiny("vanilla", 1), |_| {}).unwrap();
    for s in &vanilla.updates {
        assert_eq!(s.loss_reg, 0.0);
        assert!(s.reg_terms.is_empty());
        assert_eq!(s.loss_total, s.loss_rl);
    }
}

#[test]
fn non_finite_loss_aborts_with_dump() {
    let method = MethodSpec::vanilla();
    let mut ac = pendulum_policy(&method, 0);
    let mut t = collect_rollout(&mut ac, EnvKind::Pendulum.make(0), 64, &mut stream(0, "action")).unwrap();
    t.rewards[10] = 1e300;
    let cfg = PpoConfig { epochs: 1, ..PpoConfig::default() };
    let mut adam = Adam::new(ac.params().values(), 3e-4, 1e-5);
    let err =
        ppo_update(&mut ac, &mut adam, &t, &cfg, &method, 4, &mut stream(0, "m"), &mut stream(0, "r")).unwrap_err();
    match err {
        crate::Error::NonFiniteLoss { update, epoch, dump } => {
            assert_eq!((update, epoch), (4, 0));
            let v: serde_json::Value = serde_json::from_str(&dump).unwrap();
            assert!(v["indices"].as_array().unwrap().len() == 64);
        }
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn curve_csv_has_header_and_rows() {
    let dir = std::env::temp_dir().join(format!("smoothrl-curve-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("curve.csv");
    let rows = vec![CurveRow { step: 10, mean_episode_return: -5.0, loss_total: 1.5, loss_rl: 1.0, loss_reg: 0.5 }];
    write_curve_csv(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, format!("{CURVE_HEADER}\n10,-5.0,1.5,1.0,0.5\n"));
    std::fs::remove_dir_all(&dir).unwrap();
}
