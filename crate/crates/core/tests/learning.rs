use proptest::prelude::*;
use srm_core::envs::{make_labeled, make_task, Direction, OfficeLayout};
use srm_core::eval::EvalSchedule;
use srm_core::learn::*;
use srm_core::srm::Srm;

fn schedule() -> EvalSchedule {
    EvalSchedule {
        interval: 2_000,
        ..EvalSchedule::tabular()
    }
}

/// Q-tables after every episode plus the evaluation curve.
fn trace(
    task: &str,
    model: &dyn RewardModel,
    steps: u64,
    seed: u64,
) -> (Vec<Vec<QTable>>, Vec<f64>) {
    let mut env = make_task("office-discrete", task, seed).unwrap();
    let mut tables = Vec::new();
    let (_, report) = train_tabular(
        &mut env,
        model,
        &Hyper::default(),
        &schedule(),
        steps,
        seed,
        &mut |agent, _| {
            tables.push(agent.tables().to_vec());
        },
    )
    .unwrap();
    (
        tables,
        report.curve.points.iter().map(|p| p.mean10).collect(),
    )
}

fn labeled(task: &str) -> LabeledModel {
    let (labeling, machine) = make_labeled("office-discrete", task).unwrap();
    LabeledModel { labeling, machine }
}

#[test]
fn reward_machine_and_symbolic_machine_learn_identically() {
    for task in ["post_inner_offices", "diagonal_run"] {
        let srm = make_task("office-discrete", task, 0)
            .unwrap()
            .hidden_srm()
            .clone();
        let (a, ca) = trace(task, &labeled(task), 40_000, 7);
        let (b, cb) = trace(task, &srm, 40_000, 7);
        assert!(a.len() > 10, "{task}: too few episodes");
        assert_eq!(a, b, "{task}: tables differ");
        assert_eq!(ca, cb, "{task}: curves differ");
    }
}

/// Optimal values on the product of the office grid and the machine, by
/// value iteration over the deterministic layout.
fn product_values(layout: &OfficeLayout, srm: &Srm, gamma: f64) -> Vec<Vec<f64>> {
    let (w, h) = (layout.width as usize, layout.height as usize);
    let cells = w * h;
    let mut q = vec![vec![0.0; cells * 4]; srm.state_count()];
    for _ in 0..2_000 {
        let mut next_q = q.clone();
        for (u, table) in next_q.iter_mut().enumerate() {
            for c in 0..cells {
                let cell = ((c % w) as i64, (c / w) as i64);
                for (a, d) in Direction::ALL.iter().enumerate() {
                    let n = layout.move_from(cell, *d);
                    let (r, v) = srm.step_from(u, &[n.0 as f64, n.1 as f64]).unwrap();
                    let ni = n.0 as usize + w * n.1 as usize;
                    let best = q[v][ni * 4..ni * 4 + 4]
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max);
                    table[c * 4 + a] = if srm.is_terminal(v) {
                        r
                    } else {
                        r + gamma * best
                    };
                }
            }
        }
        q = next_q;
    }
    q
}

#[test]
fn uniform_exploration_reaches_the_product_optimum() {
    let hp = Hyper {
        alpha: LearningRate::Constant(0.5),
        gamma: 0.9,
        epsilon: 1.0,
    };
    let mut env = make_task("office-discrete", "post_inner_offices", 0).unwrap();
    let srm = env.hidden_srm().clone();
    let (agent, _) = train_tabular(
        &mut env,
        &srm,
        &hp,
        &EvalSchedule {
            interval: u64::MAX,
            ..EvalSchedule::tabular()
        },
        1_500_000,
        3,
        &mut |_, _| {},
    )
    .unwrap();
    let oracle = product_values(&OfficeLayout::builtin(), &srm, hp.gamma);
    let mut worst: f64 = 0.0;
    for (u, table) in agent.tables().iter().enumerate() {
        if srm.is_terminal(u) {
            continue;
        }
        for (i, v) in table.values().iter().enumerate() {
            worst = worst.max((v - oracle[u][i]).abs());
        }
    }
    assert!(worst < 1e-3, "max deviation {worst}");
}

#[test]
fn plain_q_learning_ignores_history() {
    let mut env = make_task("office-discrete", "post_inner_offices", 0).unwrap();
    let (agent, _) = train_tabular(
        &mut env,
        &PassThrough,
        &Hyper::default(),
        &schedule(),
        5_000,
        1,
        &mut |_, _| {},
    )
    .unwrap();
    assert_eq!(agent.tables().len(), 1);
}

#[test]
fn product_replay_matches_exactly() {
    for task in ["post_inner_offices", "diagonal_run"] {
        let mut env = make_task("office-discrete", task, 0).unwrap();
        let srm = env.hidden_srm().clone();
        let r = cross_product_check(&mut env, &srm, &Hyper::default(), 10_000, 9).unwrap();
        assert_eq!(r.steps, 10_000);
        assert_eq!(r.max_abs_diff, 0.0, "{task}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn machines_agree_under_any_seed(seed in any::<u64>()) {
        let task = "post_inner_offices";
        let srm = make_task("office-discrete", task, 0).unwrap().hidden_srm().clone();
        let (a, ca) = trace(task, &labeled(task), 6_000, seed);
        let (b, cb) = trace(task, &srm, 6_000, seed);
        prop_assert_eq!(a, b);
        prop_assert_eq!(ca, cb);
    }
}
