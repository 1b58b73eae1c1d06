use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::policies::{ActorCritic, PolicySpec};
use crate::rng::stream;

fn rand_tensor(rng: &mut crate::rng::Rng, r: usize, c: usize, scale: f64) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-scale..scale)).collect())
}

fn identity<'t>(x: Var<'t>) -> Result<Var<'t>> {
    Ok(x)
}

fn constant<'t>(c: Var<'t>) -> impl Fn(Var<'t>) -> Result<Var<'t>> {
    move |x| Ok(c.expand_rows(x.rows()))
}

fn layer<'t>(w: Var<'t>) -> impl Fn(Var<'t>) -> Result<Var<'t>> {
    move |x| Ok(x.matmul(w).tanh())
}

fn sum_square<'t>(x: Var<'t>) -> Result<Var<'t>> {
    Ok(x.sum_cols().square())
}

#[test]
fn grammar_round_trips() {
    for name in METHOD_NAMES {
        let m: MethodSpec = name.parse().unwrap();
        assert_eq!(m.name(), name);
        m.validate().unwrap();
    }
    let m: MethodSpec = " LipsNet + CAPS ".parse().unwrap();
    assert_eq!(m.name(), "lipsnet+caps");
    assert!(m.has(Regularizer::LipsnetKLoss) && m.has(Regularizer::Caps));
}

#[test]
fn unknown_method_lists_grammar() {
    let err = "liu+caps".parse::<MethodSpec>().unwrap_err().to_string();
    assert!(err.contains(METHOD_GRAMMAR), "{err}");
}

#[test]
fn invariants_enforced() {
    let mut m: MethodSpec = "caps".parse().unwrap();
    m.regularizers.insert(Regularizer::L2c2);
    assert!(matches!(m.validate(), Err(Error::Config(_))));

    let mut m = MethodSpec::vanilla();
    m.regularizers.insert(Regularizer::LiuLoss);
    assert!(m.validate().is_err());

    let mut m: MethodSpec = "lipsnet".parse().unwrap();
    m.regularizers.remove(&Regularizer::LipsnetKLoss);
    assert!(m.validate().is_err());

    let mut m: MethodSpec = "caps".parse().unwrap();
    m.caps.sigma = 0.0;
    assert!(m.validate().is_err());
}

#[test]
fn caps_constant_policy_is_zero() {
    let mut rng = stream(0, "t");
    let tape = Tape::new();
    let c = tape.constant(Tensor::row(&[0.3, -1.0]));
    let pi = constant(c);
    let s = rand_tensor(&mut rng, 5, 3, 1.0);
    let sn = rand_tensor(&mut rng, 5, 3, 1.0);
    assert_eq!(caps_loss(&tape, &pi, &s, &sn, &CapsConfig::default(), &mut rng).unwrap().item(), 0.0);
}

#[test]
fn caps_linear_policy_pinned_sample() {
    let tape = Tape::new();
    let cfg = CapsConfig { sigma: 0.1, lambda_t: 0.1, lambda_s: 0.5 };
    let l =
        caps_loss_with_noise(&tape, &identity, &Tensor::scalar(0.0), &Tensor::scalar(1.0), &Tensor::scalar(0.1), &cfg)
            .unwrap();
    assert!((l.item() - 0.15).abs() < 1e-15);
}

#[test]
fn l2c2_zero_cases() {
    let mut rng = stream(1, "t");
    let s = rand_tensor(&mut rng, 4, 3, 1.0);
    let tape = Tape::new();
    let w = tape.constant(rand_tensor(&mut rng, 3, 2, 1.0));
    let pi = layer(w);
    let v = sum_square;
    let cfg = L2c2Config::default();
    // No motion: the interpolated state is s itself.
    assert_eq!(l2c2_loss(&tape, &pi, &v, &s, &s, &cfg, &mut rng).unwrap().item(), 0.0);

    let c = tape.constant(Tensor::row(&[0.3]));
    let pc = constant(c);
    let sn = rand_tensor(&mut rng, 4, 3, 1.0);
    assert_eq!(l2c2_loss(&tape, &pc, &pc, &s, &sn, &cfg, &mut rng).unwrap().item(), 0.0);
}

#[test]
fn empty_or_mismatched_batch_rejected() {
    // A zero-row batch cannot be formed at all.
    assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    let tape = Tape::new();
    let mut rng = stream(0, "t");
    let a = Tensor::zeros(2, 3);
    let b = Tensor::zeros(3, 3);
    assert!(caps_loss(&tape, &identity, &a, &b, &CapsConfig::default(), &mut rng).is_err());
    assert!(l2c2_loss(&tape, &identity, &identity, &a, &b, &L2c2Config::default(), &mut rng).is_err());
}

/// Parameter gradients of both losses vs central differences, noise pinned.
#[test]
fn gradients_match_finite_differences() {
    let mut rng = stream(2, "t");
    let mut spec =
        PolicySpec::new(3, 2, ArchSpec::Plain { hidden: vec![6], activation: crate::autodiff::Activation::Tanh });
    spec.critic_hidden = vec![5];
    let mut ac = ActorCritic::new(spec, 3).unwrap();
    for v in ac.params_mut().values_mut() {
        for x in v.data_mut() {
            *x += rng.random_range(-0.4..0.4);
        }
    }
    let s = rand_tensor(&mut rng, 6, 3, 1.0);
    let sn = rand_tensor(&mut rng, 6, 3, 1.0);
    let noise = s.zip_map(&rand_tensor(&mut rng, 6, 3, 0.2), |a, b| a + b);
    let u = rand_tensor(&mut rng, 6, 3, 1.0);

    for which in ["caps", "l2c2"] {
        let eval = |params: &ParamSetLike, tracked: bool| -> (f64, Vec<Tensor>) {
            let tape = Tape::new();
            let b = if tracked { params.bind(&tape) } else { params.bind_constant(&tape) };
            let pi = |x| Ok(ac.actor_forward(&b, x)?.mean);
            let v = |x| ac.value_forward(&b, x);
            let l = if which == "caps" {
                caps_loss_with_noise(&tape, &pi, &s, &sn, &noise, &CapsConfig::default()).unwrap()
            } else {
                l2c2_loss_with_factors(&tape, &pi, &v, &s, &sn, &u, &L2c2Config::default()).unwrap()
            };
            let g = if tracked { tape.gradients(l, b.vars()).unwrap() } else { Vec::new() };
            (l.item(), g)
        };
        let (_, grads) = eval(ac.params(), true);
        let h = 1e-6;
        for (i, g) in grads.iter().enumerate() {
            for j in 0..g.len() {
                let mut p = ac.params().clone();
                p.value_mut(i).data_mut()[j] += h;
                let fp = eval(&p, false).0;
                p.value_mut(i).data_mut()[j] -= 2.0 * h;
                let fm = eval(&p, false).0;
                let fd = (fp - fm) / (2.0 * h);
                let err = (fd - g.data()[j]).abs() / (1.0 + fd.abs().max(g.data()[j].abs()));
                assert!(err < 1e-3, "{which} {}[{j}]: {} vs {fd}", ac.params().name(i), g.data()[j]);
            }
        }
    }
}

type ParamSetLike = crate::policies::ParamSet;

#[test]
fn zero_weights_leave_rl_loss_untouched() {
    let ac = ActorCritic::new(PolicySpec::new(3, 1, ArchSpec::default()), 0).unwrap();
    let mut m: MethodSpec = "caps".parse().unwrap();
    m.caps.lambda_t = 0.0;
    m.caps.lambda_s = 0.0;
    let tape = Tape::new();
    let b = ac.params().bind(&tape);
    let s = Tensor::filled(4, 3, 0.2);
    let batch = RegularizerBatch { tape: &tape, policy: &ac, params: &b, states: &s, next_states: &s, k_values: None };
    let terms = regularizer_terms(&m, &batch, &mut stream(0, "reg")).unwrap();
    assert!(terms.sum().is_none());
    let rl = tape.scalar(1.25);
    assert_eq!(total_loss(rl, &terms), rl);
    let terms = regularizer_terms(&MethodSpec::vanilla(), &batch, &mut stream(0, "reg")).unwrap();
    assert_eq!(total_loss(rl, &terms), rl);
}

#[test]
fn hybrid_activates_both_terms() {
    let m: MethodSpec = "lipsnet+l2c2".parse().unwrap();
    let ac = ActorCritic::new(PolicySpec::new(3, 1, m.arch.clone()), 0).unwrap();
    let tape = Tape::new();
    let b = ac.params().bind(&tape);
    let mut rng = stream(5, "t");
    let s = rand_tensor(&mut rng, 4, 3, 1.0);
    let sn = rand_tensor(&mut rng, 4, 3, 1.0);
    let out = ac.actor_forward(&b, tape.constant(s.clone())).unwrap();
    let batch =
        RegularizerBatch { tape: &tape, policy: &ac, params: &b, states: &s, next_states: &sn, k_values: out.k };
    let terms = regularizer_terms(&m, &batch, &mut rng).unwrap();
    let names: Vec<_> = terms.iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["l2c2", "lipsnet_k"]);
    // K starts at 1, so the penalty is exactly the weight.
    assert!((terms.lipsnet_k.unwrap().item() - 0.1).abs() < 1e-12);
    let rl = tape.scalar(2.0);
    let total = total_loss(rl, &terms).item();
    assert!((total - (2.0 + terms.l2c2.unwrap().item() + 0.1)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn losses_are_non_negative(seed in 0u64..10_000, b in 1usize..6, sigma in 0.01f64..2.0) {
        let mut rng = stream(seed, "t");
        let tape = Tape::new();
        let w = tape.constant(rand_tensor(&mut rng, 3, 2, 2.0));
        let pi = layer(w);
        let v = sum_square;
        let s = rand_tensor(&mut rng, b, 3, 3.0);
        let sn = rand_tensor(&mut rng, b, 3, 3.0);
        let caps = CapsConfig { sigma, ..CapsConfig::default() };
        let l2c2 = L2c2Config { sigma, ..L2c2Config::default() };
        prop_assert!(caps_loss(&tape, &pi, &s, &sn, &caps, &mut rng).unwrap().item() >= 0.0);
        prop_assert!(l2c2_loss(&tape, &pi, &v, &s, &sn, &l2c2, &mut rng).unwrap().item() >= 0.0);
    }
}
