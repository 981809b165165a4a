mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srm_core::envs::{make_labeled, make_task};
use srm_core::eval::EvalSchedule;
use srm_core::learn::*;

use common::{gradient_error, random_net_case};

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let (net, batch) = random_net_case(&mut rng);
        let view: Vec<(&[f64], usize, f64)> = batch
            .iter()
            .map(|(x, a, t)| (x.as_slice(), *a, *t))
            .collect();
        let err = gradient_error(&net, &view);
        assert!(
            err < 1e-4,
            "relative error {err} for sizes {:?}",
            net.sizes()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn gradient_is_exact_for_any_net(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (net, batch) = random_net_case(&mut rng);
        let view: Vec<(&[f64], usize, f64)> = batch.iter().map(|(x, a, t)| (x.as_slice(), *a, *t)).collect();
        prop_assert!(gradient_error(&net, &view) < 1e-4);
    }
}

#[test]
fn adam_descends_a_fixed_regression() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = Mlp::new(&[2, 8, 1], &mut rng);
    let xs: Vec<Vec<f64>> = (0..16)
        .map(|i| vec![(i % 4) as f64 / 3.0, (i / 4) as f64 / 3.0])
        .collect();
    let batch: Vec<(&[f64], usize, f64)> = xs
        .iter()
        .map(|x| (x.as_slice(), 0, x[0] - 2.0 * x[1]))
        .collect();
    let mut opt = Adam::new(net.param_count(), 1e-2);
    let before = net.loss(&batch);
    for _ in 0..500 {
        let (_, g) = net.loss_and_grads(&batch);
        opt.step(&mut net, &g);
    }
    assert!(net.loss(&batch) < before * 0.05);
}

#[test]
fn labeled_and_symbolic_machines_train_identical_networks() {
    let task = "post_inner_offices";
    let (labeling, machine) = make_labeled("office-continuous", task).unwrap();
    let labeled = LabeledModel { labeling, machine };
    let hp = DeepHyper {
        hidden: vec![32, 32],
        learning_starts: 500,
        ..DeepHyper::default()
    };
    let schedule = EvalSchedule {
        interval: 2_000,
        runs: 5,
        ..EvalSchedule::deep()
    };
    let mut a_env = make_task("office-continuous", task, 4).unwrap();
    let srm = a_env.hidden_srm().clone();
    let (a, ra) = train_deep(&mut a_env, &labeled, &hp, &schedule, 12_000, 4).unwrap();
    let mut b_env = make_task("office-continuous", task, 4).unwrap();
    let (b, rb) = train_deep(&mut b_env, &srm, &hp, &schedule, 12_000, 4).unwrap();
    assert!(a.train_steps() > 0);
    assert_eq!(a.nets(), b.nets());
    let scores = |r: &TrainReport| {
        r.curve
            .points
            .iter()
            .map(|p| (p.step, p.performance))
            .collect::<Vec<_>>()
    };
    assert_eq!(scores(&ra), scores(&rb));
    assert_eq!(ra.curve.points.len(), 6);
}

#[test]
fn mountain_car_trains_without_diverging() {
    let mut env = make_task("mountain-car", "rml", 2).unwrap();
    let srm = env.hidden_srm().clone();
    let hp = DeepHyper {
        hidden: vec![16],
        learning_starts: 200,
        ..DeepHyper::default()
    };
    let schedule = EvalSchedule {
        interval: 1_000,
        runs: 2,
        ..EvalSchedule::deep()
    };
    let (agent, report) = train_deep(&mut env, &srm, &hp, &schedule, 3_000, 2).unwrap();
    assert_eq!(agent.nets().len(), srm.state_count());
    assert!(report
        .curve
        .points
        .iter()
        .all(|p| p.performance.is_finite()));
}
