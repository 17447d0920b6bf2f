use icea_core::datasets::*;
use icea_core::orchestrator::*;
use icea_core::transport::{decode_message, encode_message, CarrierKind, Message};
use icea_core::weak_learner::{fit_tree, sse, RegressionTree, TreeParams};
use proptest::prelude::*;

fn params(depth: usize, leaf: usize) -> TreeParams {
    TreeParams { max_depth: depth, min_samples_leaf: leaf, min_gain: 0.0 }
}

fn friedman(rule: Rule, n: usize, seed: u64) -> Dataset {
    let mut spec = GeneratorSpec::new(rule, n, seed);
    spec.normalize_targets = true;
    generate(&spec).unwrap()
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, Just(0.0), Just(-0.0), Just(1e-300), Just(f64::MAX), Just(f64::MIN_POSITIVE)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tree_is_invariant_to_row_order(
        rows in prop::collection::vec((0u8..6, 0u8..4, -50i32..50), 2..40),
        perm_seed in any::<u64>(),
    ) {
        let cols = |rs: &[(u8, u8, i32)]| vec![
            rs.iter().map(|r| r.0 as f64).collect::<Vec<_>>(),
            rs.iter().map(|r| r.1 as f64 * 0.5).collect(),
        ];
        let res = |rs: &[(u8, u8, i32)]| rs.iter().map(|r| r.2 as f64 / 7.0).collect::<Vec<_>>();
        let mut shuffled = rows.clone();
        icea_core::rng::SeededStream::new(perm_seed).shuffle(&mut shuffled);
        let p = params(3, 1);
        let a = fit_tree(&cols(&rows), &res(&rows), &p).unwrap();
        let b = fit_tree(&cols(&shuffled), &res(&shuffled), &p).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tree_never_worse_than_mean(
        xs in prop::collection::vec(-10.0..10.0f64, 1..60),
        depth in 0usize..5,
        leaf in 1usize..6,
    ) {
        let r: Vec<f64> = xs.iter().map(|x| (x * 1.3).sin() + x * 0.1).collect();
        let cols = vec![xs];
        let tree = fit_tree(&cols, &r, &params(depth, leaf)).unwrap();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let base: f64 = r.iter().map(|v| (v - mean) * (v - mean)).sum();
        prop_assert!(sse(&r, &tree.predict_columns(&cols).unwrap()) <= base * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn codec_roundtrips_bit_exact(
        residual in prop::collection::vec(finite(), 0..20),
        rows in prop::collection::vec(prop::collection::vec(finite(), 3), 0..5),
        run_id in any::<u64>(),
        commit in any::<bool>(),
    ) {
        let n = residual.len();
        let msgs = [
            Message::FitRequest { run_id, residual: residual.clone(), commit },
            Message::CommitAck { run_id, delta_predictions: residual.clone() },
            Message::PredictRequest { run_id, rows },
            Message::PredictResponse { run_id, values: residual },
        ];
        for m in msgs {
            let bytes = encode_message(&m).unwrap();
            prop_assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 1);
            let expect = matches!(m, Message::FitRequest { .. } | Message::CommitAck { .. }).then_some(n);
            let back = decode_message(&bytes, expect).unwrap();
            prop_assert_eq!(encode_message(&back).unwrap(), bytes);
            if let (Message::FitRequest { residual: a, .. }, Message::FitRequest { residual: b, .. }) = (&m, &back) {
                prop_assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
    }
}

#[test]
fn residual_identity_holds_for_every_schedule() {
    let ds = friedman(Rule::Friedman1, 300, 3);
    let assign = assignment_system(2).unwrap();
    for schedule in [Schedule::RoundRobin, Schedule::Greedy, Schedule::GreedyPenalized { lambda: 0.01 }] {
        let opts = RunOptions { schedule, params: params(3, 5), stop: StopRule { max_updates: 40, ..Default::default() }, ..Default::default() };
        let run = run_icea(&ds, None, &assign, &opts).unwrap();
        let pred = predict_ensemble(&run.models, &ds).unwrap();
        let tol = 1e-10 * ds.n() as f64;
        for i in 0..ds.n() {
            assert!((ds.targets[i] - pred[i] - run.residual[i]).abs() <= tol, "{schedule:?} row {i}");
        }
        assert!(run.metrics.is_monotone(), "{schedule:?}");
        assert!(run.audit.pass(), "{}", run.audit);
    }
}

#[test]
fn runs_are_deterministic_and_carrier_independent() {
    let ds = friedman(Rule::Friedman2, 400, 11);
    let (train, test) = split(&ds, 250, 150, 11).unwrap();
    let assign = assignment_system(3).unwrap();
    let base = RunOptions { params: params(3, 5), stop: StopRule { max_updates: 30, ..Default::default() }, ..Default::default() };
    let a = run_icea(&train, Some(&test), &assign, &base).unwrap();
    let b = run_icea(&train, Some(&test), &assign, &base).unwrap();
    assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
    let sock = RunOptions { carrier: CarrierKind::LocalSocket { port_base: 0 }, ..base.clone() };
    let c = run_icea(&train, Some(&test), &assign, &sock).unwrap();
    assert_eq!(a.metrics.to_csv(), c.metrics.to_csv());
    assert_eq!(a.models, c.models);
    let greedy = RunOptions { schedule: Schedule::Greedy, ..sock };
    let g1 = run_icea(&train, Some(&test), &assign, &greedy).unwrap();
    let g2 = run_icea(&train, Some(&test), &assign, &RunOptions { carrier: CarrierKind::InProcess, ..greedy }).unwrap();
    assert_eq!(g1.metrics.to_csv(), g2.metrics.to_csv());
}

#[test]
fn additive_target_matches_brute_force_additive_fit() {
    // y = f(a) + h(b) on a 10×10 grid of levels; the oracle is the exact
    // least-squares additive fit computed by backfitting group means.
    let n = 1000;
    let mut stream = icea_core::rng::SeededStream::new(5);
    let a: Vec<f64> = (0..n).map(|_| stream.index_below(10) as f64).collect();
    let b: Vec<f64> = (0..n).map(|_| stream.index_below(10) as f64).collect();
    let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| (a * 0.7).sin() * 3.0 + (b - 4.5).powi(2) / 5.0).collect();
    let ds = Dataset::from_columns(vec![a.clone(), b.clone()], y.clone()).unwrap();

    let mut fa = [0.0; 10];
    let mut fb = [0.0; 10];
    let means = |own: &[f64], other: &[f64], g: &[f64; 10]| {
        let mut sum = [0.0; 10];
        let mut cnt = [0.0; 10];
        for i in 0..n {
            sum[own[i] as usize] += y[i] - g[other[i] as usize];
            cnt[own[i] as usize] += 1.0;
        }
        std::array::from_fn(|k| if cnt[k] > 0.0 { sum[k] / cnt[k] } else { 0.0 })
    };
    for _ in 0..200 {
        fa = means(&a, &b, &fb);
        fb = means(&b, &a, &fa);
    }
    let oracle_mse = (0..n).map(|i| (y[i] - fa[a[i] as usize] - fb[b[i] as usize]).powi(2)).sum::<f64>() / n as f64;
    assert!(oracle_mse < 1e-20);

    let assign = FeatureAssignment::new(vec![vec![0], vec![1]], 2).unwrap();
    let opts = RunOptions { params: params(6, 1), stop: StopRule::absolute(1e-14, 200), ..Default::default() };
    let run = run_icea(&ds, None, &assign, &opts).unwrap();
    assert!(run.metrics.final_train_mse() < 1e-3 * ds.target_variance());
    assert!(run.metrics.final_train_mse() <= oracle_mse + 1e-9);
}

#[test]
fn product_rule_is_additively_unlearnable_and_log_fixes_positive_case() {
    let ds = generate(&GeneratorSpec::new(Rule::ProductXy, 2000, 4)).unwrap();
    let assign = FeatureAssignment::new(vec![vec![0], vec![1]], 2).unwrap();
    let opts = RunOptions { params: TreeParams { max_depth: 4, min_samples_leaf: 20, min_gain: 5.0 }, ..Default::default() };
    let run = run_icea(&ds, None, &assign, &opts).unwrap();
    assert!(run.metrics.final_train_mse() >= 0.9 * ds.target_variance());

    // positive uniforms: log(x1·x2) is additive
    let mut s = icea_core::rng::SeededStream::new(9);
    let x1: Vec<f64> = (0..1000).map(|_| s.uniform_in(0.5, 4.0)).collect();
    let x2: Vec<f64> = (0..1000).map(|_| s.uniform_in(0.5, 4.0)).collect();
    let y = x1.iter().zip(&x2).map(|(a, b)| a * b).collect();
    let pos = Dataset::from_columns(vec![x1, x2], y).unwrap();
    let (logged, tf) = log_transform_targets(&pos).unwrap();
    let run = run_icea(&logged, None, &assign, &RunOptions { params: params(5, 2), ..Default::default() }).unwrap();
    assert!(run.metrics.final_train_mse() < 1e-2 * logged.target_variance());
    let pred = predict_ensemble(&run.models, &logged).unwrap();
    let back: Vec<f64> = pred.iter().map(|&p| tf.invert(p)).collect();
    let rel = back.iter().zip(&pos.targets).map(|(p, y)| ((p - y) / y).abs()).fold(0.0, f64::max);
    assert!(rel < 0.3, "{rel}");
}

#[test]
fn two_agent_fit_is_sum_of_parts() {
    let ds = friedman(Rule::Friedman1, 120, 2);
    let t0 = fit_tree(&ds.select_columns(&[0]), &ds.targets, &params(2, 3)).unwrap();
    let t1 = fit_tree(&ds.select_columns(&[3, 4]), &ds.targets, &params(2, 3)).unwrap();
    let wrap = |agent, features: Vec<usize>, tree: &RegressionTree| AgentModel {
        agent,
        features,
        trees: vec![FittedTree { tree: tree.clone(), round: 1, update: agent + 1 }],
    };
    let models = [wrap(0, vec![0], &t0), wrap(1, vec![3, 4], &t1)];
    let both = predict_ensemble(&models, &ds).unwrap();
    let p0 = t0.predict_columns(&ds.select_columns(&[0])).unwrap();
    let p1 = t1.predict_columns(&ds.select_columns(&[3, 4])).unwrap();
    for i in 0..ds.n() {
        assert_eq!(both[i], p0[i] + p1[i]);
    }
}

#[test]
fn hierarchical_single_agent_is_no_better_than_boosting() {
    let ds = friedman(Rule::Friedman1, 1500, 8);
    let (train, test) = split(&ds, 500, 1000, 8).unwrap();
    let assign = FeatureAssignment::new(vec![vec![0, 1, 2, 3, 4]], 5).unwrap();
    let opts = RunOptions { params: params(3, 5), stop: StopRule { max_updates: 150, ..Default::default() }, ..Default::default() };
    let boost = run_l2_boosting(&train, Some(&test), &opts).unwrap();
    let hier = run_hierarchical(&train, Some(&test), &assign, &opts).unwrap();
    assert_eq!(hier.stage1[0].metrics, boost.metrics);
    assert!(hier.stage2.metrics.final_test_mse().unwrap() >= boost.metrics.final_test_mse().unwrap());
}

#[test]
fn cooperation_beats_hierarchy_on_disjoint_additive_target() {
    let ds = friedman(Rule::Friedman1, 1500, 12);
    let (train, test) = split(&ds, 500, 1000, 12).unwrap();
    let assign = FeatureAssignment::new(vec![vec![0, 1], vec![2, 3, 4]], 5).unwrap();
    let opts = RunOptions { params: params(4, 5), stop: StopRule { max_updates: 200, ..Default::default() }, ..Default::default() };
    let icea = run_icea(&train, Some(&test), &assign, &opts).unwrap();
    let hier = run_hierarchical(&train, Some(&test), &assign, &opts).unwrap();
    assert!(icea.metrics.final_test_mse().unwrap() < hier.stage2.metrics.final_test_mse().unwrap());
}

#[test]
fn datasets_persist_with_provenance() {
    let dir = std::env::temp_dir().join(format!("icea-core-ds-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("f3.csv");
    let ds = friedman(Rule::Friedman3, 50, 21);
    write_csv(&ds, &path).unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!(back.columns, ds.columns);
    assert_eq!(back.targets, ds.targets);
    assert_eq!(back.provenance, ds.provenance);
    assert!(provenance_path(&path).exists());
    std::fs::remove_dir_all(&dir).unwrap();
}
