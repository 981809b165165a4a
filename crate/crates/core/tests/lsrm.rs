use srm_core::envs::make_task;
use srm_core::eval::EvalSchedule;
use srm_core::infer::{InferConfig, Mode};
use srm_core::learn::{train_with, Hyper, Learner, RewardModel, TabularAgent};
use srm_core::lsrm::*;
use srm_core::srm::Srm;
use srm_core::{seeded, Stream};

const TASK: &str = "post_inner_offices";

fn gf_config(storage: Storage) -> LsrmConfig {
    let guards = make_task("office-discrete", TASK, 0)
        .unwrap()
        .spec()
        .guard_set();
    LsrmConfig {
        mode: Mode::Given(guards),
        infer: InferConfig::default(),
        storage,
    }
}

fn run(config: &LsrmConfig, steps: u64, seed: u64) -> (TabularAgent, LsrmReport) {
    let mut task = make_task("office-discrete", TASK, seed).unwrap();
    let mut agent =
        TabularAgent::for_task(&task, &srm_core::learn::PassThrough, &Hyper::default()).unwrap();
    let (mut rng, mut eval_rng) = (seeded(seed, Stream::Agent), seeded(seed, Stream::Eval));
    let report = lsrm_train(
        &mut task,
        &mut agent,
        config,
        &EvalSchedule::tabular(),
        steps,
        &mut rng,
        &mut eval_rng,
        &mut (),
    )
    .unwrap();
    (agent, report)
}

#[test]
fn first_reward_triggers_the_first_inference() {
    let (_, report) = run(&gf_config(Storage::Prefix), 3_000, 2);
    let first = &report.examples.items()[0];
    let (last, earlier) = first.rewards().split_last().unwrap();
    assert_ne!(*last, 0.0);
    assert!(earlier.iter().all(|r| *r == 0.0));
    assert_eq!(report.events[0].counterexamples, 1);
    assert_eq!(report.events[0].step as usize, first.len());
}

#[test]
fn hypothesis_explains_every_counterexample() {
    let (_, report) = run(&gf_config(Storage::Prefix), 40_000, 1);
    assert!(!report.events.is_empty());
    for e in report.examples.items() {
        assert!(e.consistent_with(&report.hypothesis).unwrap());
    }
    let states: Vec<usize> = report.events.iter().map(|e| e.states).collect();
    assert!(
        states.windows(2).all(|w| w[0] <= w[1]),
        "state counts {states:?}"
    );
}

#[test]
fn full_storage_keeps_whole_episodes() {
    let (_, report) = run(&gf_config(Storage::Full), 3_000, 2);
    let task = make_task("office-discrete", TASK, 0).unwrap();
    for e in report.examples.items() {
        let ended = e.len() == task.step_cap()
            || task.hidden_srm().run(e.states()).unwrap().last() == Some(&10.0);
        assert!(ended, "stored episode of length {} is cut short", e.len());
    }
}

#[test]
fn after_the_last_restart_training_is_plain_qsrm() {
    let total = 120_000;
    let (agent, report) = run(&gf_config(Storage::Prefix), total, 3);
    let (restart_step, rng) = report.restart.clone();
    assert!(restart_step > 0 && restart_step < total);

    let mut task = make_task("office-discrete", TASK, 3).unwrap();
    let model = Hypothesis::new(report.hypothesis.clone());
    let mut replay = TabularAgent::for_task(&task, &model, &Hyper::default()).unwrap();
    let mut rng = rng;
    Learner::reinitialize(&mut replay, model.state_count(), &mut rng);
    let mut eval_rng = seeded(0, Stream::Eval);
    let schedule = EvalSchedule {
        interval: u64::MAX,
        ..EvalSchedule::tabular()
    };
    train_with(
        &mut task,
        &model,
        &mut replay,
        &schedule,
        total - restart_step,
        &mut rng,
        &mut eval_rng,
        &mut |_, _| {},
    )
    .unwrap();
    assert_eq!(agent.tables(), replay.tables());
}

#[test]
fn hypothesis_marks_the_transition_that_ends_episodes() {
    let task = make_task("office-discrete", TASK, 0).unwrap();
    let srm = task.hidden_srm().clone();
    let plain = Srm::new(
        srm.variables().to_vec(),
        srm.state_count(),
        srm.initial(),
        srm.transitions().to_vec(),
    )
    .unwrap();
    let h = Hypothesis::new(plain);
    assert_eq!(h.state_count(), srm.state_count() + 1);
    let last = srm
        .transitions()
        .iter()
        .position(|t| t.reward == 10.0)
        .unwrap();
    let from = srm.transitions()[last].from;
    let a = [7.0, 0.0];
    assert_eq!(
        h.transition(from, &a, 0.0).unwrap(),
        (10.0, srm.transitions()[last].to)
    );
    h.note_step(from, &a, true);
    assert_eq!(h.ending(), vec![last]);
    assert_eq!(h.transition(from, &a, 0.0).unwrap(), (10.0, h.absorbing()));
    assert!(h.is_terminal(h.absorbing()));
    h.note_step(from, &a, false);
    assert!(h.ending().is_empty());
}

#[test]
fn equivalence_sampling() {
    let task = make_task("office-discrete", TASK, 0).unwrap();
    let srm = task.hidden_srm();
    let mut rng = seeded(5, Stream::Env);
    let same = equivalence_sample_check(srm, srm, &task, 300, &mut rng).unwrap();
    assert_eq!((same.trials, same.mismatches), (300, 0));
    let basic = init_basic_srm(task.variables());
    let differ = equivalence_sample_check(srm, &basic, &task, 300, &mut rng).unwrap();
    assert!(differ.mismatches > 0);
    let m = differ.first.unwrap();
    assert_ne!(m.left, m.right);
}
