//! End-to-end acceptance checks, one verdict line per criterion.
//!
//! Runs as a plain binary so the verdict lines are always shown. Every
//! criterion runs to completion; the process fails if any criterion fails
//! that is not listed in `KNOWN_GAPS`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srm_core::envs::{make_labeled, make_task};
use srm_core::eval::EvalSchedule;
use srm_core::infer::{complete_srm, infer_minimal, InferConfig, Mode, Outcome};
use srm_core::learn::*;
use srm_core::logic::{CmpOp, Formula};
use srm_core::lsrm::equivalence_sample_check;
use srm_core::run::{run_training, RunConfig, RunSummary};
use srm_core::smt::SolverConfig;
use srm_core::srm::{Domain, Srm, Transition};
use srm_core::{seeded, Stream};

use common::*;

const TABULAR_STEPS: u64 = 500_000;
const EQUIVALENCE_TRIALS: usize = 10_000;
/// Seed of the single run behind each training criterion.
const RUN_SEED: u64 = 1;
/// Criteria allowed to fail; each is explained in the README.
const KNOWN_GAPS: &[u32] = &[];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn train_run(
    dir: &Path,
    method: &str,
    env: &str,
    task: &str,
    steps: Option<u64>,
    f: Option<usize>,
) -> RunSummary {
    let config = RunConfig {
        method: method.into(),
        env: env.into(),
        task: task.into(),
        seed: Some(RUN_SEED),
        steps,
        f,
        out: Some(dir.join(format!("{method}-{env}-{task}"))),
        ..RunConfig::default()
    };
    run_training(&config).unwrap_or_else(|e| panic!("{method} on {env}/{task}: {e}"))
}

fn final_mean10(s: &RunSummary) -> f64 {
    s.curve.last_mean10().unwrap_or(f64::NAN)
}

fn labeled(task: &str) -> LabeledModel {
    let (labeling, machine) = make_labeled("office-discrete", task).unwrap();
    LabeledModel { labeling, machine }
}

/// Q-tables after every episode must match bit for bit, as must the curves.
fn rq2_equality() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for task in ["post_inner_offices", "diagonal_run"] {
        let srm = make_task("office-discrete", task, 0)
            .unwrap()
            .hidden_srm()
            .clone();
        let mut snapshots: Vec<Vec<QTable>> = Vec::new();
        let mut env = make_task("office-discrete", task, RUN_SEED).unwrap();
        let (_, a) = train_tabular(
            &mut env,
            &labeled(task),
            &Hyper::default(),
            &EvalSchedule::tabular(),
            TABULAR_STEPS,
            RUN_SEED,
            &mut |agent, _| snapshots.push(agent.tables().to_vec()),
        )
        .unwrap();
        let mut episode = 0;
        let mut first_diff = None;
        let mut env = make_task("office-discrete", task, RUN_SEED).unwrap();
        let (_, b) = train_tabular(
            &mut env,
            &srm,
            &Hyper::default(),
            &EvalSchedule::tabular(),
            TABULAR_STEPS,
            RUN_SEED,
            &mut |agent, _| {
                if first_diff.is_none()
                    && snapshots.get(episode).map(Vec::as_slice) != Some(agent.tables())
                {
                    first_diff = Some(episode);
                }
                episode += 1;
            },
        )
        .unwrap();
        let curves_equal = a.curve.points == b.curve.points;
        let ok = first_diff.is_none() && episode == snapshots.len() && curves_equal;
        pass &= ok;
        details.push(format!(
            "{task}: {episode} episodes, tables {}, curves {}",
            if first_diff.is_none() {
                "equal"
            } else {
                "differ"
            },
            if curves_equal { "equal" } else { "differ" }
        ));
    }
    verdict(pass, details.join("; "))
}

fn tabular_final(model: &dyn RewardModel) -> TrainReport {
    let mut env = make_task("office-discrete", "post_inner_offices", RUN_SEED).unwrap();
    train_tabular(
        &mut env,
        model,
        &Hyper::default(),
        &EvalSchedule::tabular(),
        TABULAR_STEPS,
        RUN_SEED,
        &mut |_, _| {},
    )
    .unwrap()
    .1
}

fn qsrm_optimal() -> Verdict {
    let srm = make_task("office-discrete", "post_inner_offices", 0)
        .unwrap()
        .hidden_srm()
        .clone();
    let report = tabular_final(&srm);
    let tail: Vec<f64> = report
        .curve
        .points
        .iter()
        .rev()
        .take(10)
        .map(|p| p.mean10)
        .collect();
    let worst = tail.iter().copied().fold(f64::INFINITY, f64::min);
    verdict(
        tail.len() == 10 && worst >= 0.999,
        format!("lowest mean10 over the final 10 checkpoints {worst:.4} (need >= 0.999)"),
    )
}

fn plain_q_fails() -> Verdict {
    let report = tabular_final(&PassThrough);
    let m = report.curve.last_mean10().unwrap_or(f64::NAN);
    verdict(m < 0.5, format!("final mean10 {m:.4} (need < 0.5)"))
}

/// Learns on the discrete office task, then compares the learned machine with
/// the real one along fresh random episodes.
fn learned_machine(dir: &Path, method: &str, f: Option<usize>) -> (f64, Srm, usize) {
    let summary = train_run(
        dir,
        method,
        "office-discrete",
        "post_inner_offices",
        Some(TABULAR_STEPS),
        f,
    );
    let learned = summary
        .learned
        .clone()
        .expect("learning methods report a machine");
    let task = make_task("office-discrete", "post_inner_offices", RUN_SEED).unwrap();
    let mut rng = seeded(RUN_SEED, Stream::Env);
    let eq = equivalence_sample_check(
        &learned,
        task.hidden_srm(),
        &task,
        EQUIVALENCE_TRIALS,
        &mut rng,
    )
    .unwrap();
    (final_mean10(&summary), learned, eq.mismatches)
}

fn lsrm_gf(dir: &Path) -> Verdict {
    let (m, learned, mismatches) = learned_machine(dir, "lsrm-gf", None);
    verdict(
        m >= 0.999 && mismatches == 0,
        format!("final mean10 {m:.4} (need >= 0.999), {} states, {mismatches} mismatches in {EQUIVALENCE_TRIALS} episodes (need 0)", learned.state_count()),
    )
}

fn lsrm_ft(dir: &Path) -> Verdict {
    let (m, learned, mismatches) = learned_machine(dir, "lsrm-ft", Some(3));
    let n = learned.state_count();
    verdict(
        m >= 0.999 && n == 3 && mismatches == 0,
        format!("final mean10 {m:.4} (need >= 0.999), {n} states (need 3), {mismatches} mismatches in {EQUIVALENCE_TRIALS} episodes (need 0)"),
    )
}

fn x_only() -> Vec<String> {
    vec!["x".to_string()]
}

fn found(outcome: &Outcome) -> Option<(&Srm, usize)> {
    match outcome {
        Outcome::Found { srm, states } => Some((srm, *states)),
        _ => None,
    }
}

fn minimality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let config = InferConfig {
        max_states: 4,
        ..InferConfig::default()
    };
    let mut wrong = 0;
    for _ in 0..50 {
        let p = planted_instance(&mut rng);
        let r = infer_minimal(
            &p.examples,
            &x_only(),
            &Mode::Given(guard_formulas(&p.guards)),
            &config,
        )
        .unwrap();
        if found(&r.outcome).map(|(_, n)| n) != brute_min_states(&p.examples, &p.guards, 4) {
            wrong += 1;
        }
    }
    verdict(
        wrong == 0,
        format!("{wrong} of 50 planted instances disagree with exhaustive search"),
    )
}

fn cross_product() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for task in ["post_inner_offices", "diagonal_run"] {
        let mut env = make_task("office-discrete", task, RUN_SEED).unwrap();
        let srm = env.hidden_srm().clone();
        let r = cross_product_check(&mut env, &srm, &Hyper::default(), 10_000, RUN_SEED).unwrap();
        pass &= r.steps == 10_000 && r.max_abs_diff == 0.0;
        details.push(format!(
            "{task}: {} steps, max gap {:e}",
            r.steps, r.max_abs_diff
        ));
    }
    verdict(pass, details.join("; "))
}

fn gradient_check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let worst = (0..20)
        .map(|_| {
            let (net, batch) = random_net_case(&mut rng);
            let view: Vec<(&[f64], usize, f64)> = batch
                .iter()
                .map(|(x, a, t)| (x.as_slice(), *a, *t))
                .collect();
            gradient_error(&net, &view)
        })
        .fold(0.0, f64::max);
    verdict(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over 20 nets (need < 1e-4)"),
    )
}

fn continuous(dir: &Path) -> Verdict {
    let task = "post_inner_offices";
    let dqrm = train_run(dir, "dqrm", "office-continuous", task, None, None);
    let dqsrm = train_run(dir, "dqsrm", "office-continuous", task, None, None);
    let scores = |s: &RunSummary| {
        s.curve
            .points
            .iter()
            .map(|p| (p.step, p.performance.to_bits()))
            .collect::<Vec<_>>()
    };
    let same = !dqrm.curve.points.is_empty() && scores(&dqrm) == scores(&dqsrm);
    let office = final_mean10(&dqsrm);
    let rml = final_mean10(&train_run(dir, "dqsrm", "mountain-car", "rml", None, None));
    verdict(
        same && office >= 0.8 && rml >= 0.6,
        format!(
            "dqrm and dqsrm checkpoints {}; dqsrm office mean10 {office:.4} (need >= 0.8); rml mean10 {rml:.4} (need >= 0.6)",
            if same { "identical" } else { "differ" }
        ),
    )
}

/// A deterministic machine over `(x, y)` whose states cover only part of the
/// plane: each state splits `x` at random cuts, optionally splits a piece on
/// `y`, and keeps a random subset of the resulting disjoint boxes.
fn random_partial_machine(rng: &mut ChaCha8Rng) -> Srm {
    let n = rng.gen_range(1..=4);
    let mut transitions = Vec::new();
    for p in 0..n {
        let mut cuts: Vec<f64> = (0..rng.gen_range(0..3))
            .map(|_| rng.gen_range(1..20) as f64 * 0.5)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut edges = vec![f64::NEG_INFINITY];
        edges.extend(cuts);
        edges.push(f64::INFINITY);
        let mut boxes = Vec::new();
        for w in edges.windows(2) {
            let mut piece = Vec::new();
            if w[0].is_finite() {
                piece.push(Formula::var_cmp("x", CmpOp::Ge, w[0]));
            }
            if w[1].is_finite() {
                piece.push(Formula::var_cmp("x", CmpOp::Lt, w[1]));
            }
            if rng.gen_bool(0.4) {
                let c = rng.gen_range(1..20) as f64 * 0.5;
                let mut low = piece.clone();
                low.push(Formula::var_cmp("y", CmpOp::Lt, c));
                piece.push(Formula::var_cmp("y", CmpOp::Ge, c));
                boxes.push(Formula::And(low));
            }
            boxes.push(Formula::And(piece));
        }
        for guard in boxes {
            if rng.gen_bool(0.5) {
                transitions.push(Transition {
                    from: p,
                    guard,
                    to: rng.gen_range(0..n),
                    reward: rng.gen_range(0..3) as f64,
                });
            }
        }
    }
    Srm::new(vec!["x".into(), "y".into()], n, 0, transitions).unwrap()
}

fn soundness() -> Verdict {
    let solver = SolverConfig::from_env();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut invalid = 0;
    let mut changed = 0;
    for k in 0..100 {
        let machine = random_partial_machine(&mut rng);
        let domain = if k % 2 == 0 {
            Domain::unbounded()
        } else {
            Domain::boxed(&[("x", 0.0, 10.0), ("y", 0.0, 10.0)], true)
        };
        let done = complete_srm(&machine, &domain, &solver).unwrap();
        if !done.validate(&domain, &solver).unwrap().is_valid() {
            invalid += 1;
        }
        // completion only adds transitions
        for _ in 0..50 {
            let point = [
                rng.gen_range(-4..24) as f64 * 0.5,
                rng.gen_range(-4..24) as f64 * 0.5,
            ];
            for p in 0..machine.state_count() {
                if let Ok(step) = machine.step_from(p, &point) {
                    if done.step_from(p, &point).ok() != Some(step) {
                        changed += 1;
                    }
                }
            }
        }
    }
    let mut replay_failures = 0;
    let config = InferConfig {
        max_states: 4,
        ..InferConfig::default()
    };
    for _ in 0..30 {
        let p = planted_instance(&mut rng);
        for mode in [
            Mode::Given(guard_formulas(&p.guards)),
            Mode::Templates { formulas: 3 },
        ] {
            let r = infer_minimal(&p.examples, &x_only(), &mode, &config).unwrap();
            let replays = found(&r.outcome).is_some_and(|(srm, _)| {
                p.examples
                    .items()
                    .iter()
                    .all(|e| e.consistent_with(srm).unwrap())
            });
            if !replays {
                replay_failures += 1;
            }
        }
    }
    verdict(
        invalid == 0 && changed == 0 && replay_failures == 0,
        format!("{invalid} of 100 completed machines invalid, {changed} altered steps; {replay_failures} of 60 extractions fail to replay"),
    )
}

type Criterion<'a> = (u32, &'static str, Box<dyn Fn() -> Verdict + 'a>);

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path();
    let criteria: Vec<Criterion> = vec![
        (
            1,
            "labeled and symbolic machines learn identically",
            Box::new(rq2_equality),
        ),
        (2, "qsrm reaches optimal mean10", Box::new(qsrm_optimal)),
        (3, "plain Q-learning stays low", Box::new(plain_q_fails)),
        (
            4,
            "lsrm-gf learns an equivalent machine",
            Box::new(|| lsrm_gf(runs)),
        ),
        (
            5,
            "lsrm-ft learns a 3-state equivalent machine",
            Box::new(|| lsrm_ft(runs)),
        ),
        (6, "inferred size is minimal", Box::new(minimality)),
        (7, "cross-product replay is exact", Box::new(cross_product)),
        (
            8,
            "backprop matches finite differences",
            Box::new(gradient_check),
        ),
        (9, "continuous learners", Box::new(|| continuous(runs))),
        (
            10,
            "completion and extraction are sound",
            Box::new(soundness),
        ),
    ];
    let mut unexpected = Vec::new();
    for (id, name, check) in &criteria {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let gap = !v.pass && KNOWN_GAPS.contains(id);
        let status = if v.pass {
            "PASS"
        } else if gap {
            "FAIL (known gap)"
        } else {
            "FAIL"
        };
        println!(
            "criterion {id:>2} {status}: {name}: {} [{:.0}s]",
            v.detail,
            start.elapsed().as_secs_f64()
        );
        if !v.pass && !gap {
            unexpected.push(*id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("failing criteria: {unexpected:?}");
        std::process::exit(1);
    }
}
