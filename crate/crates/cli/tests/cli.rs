use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use srm_core::srm::Srm;

fn srm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../tasks")
        .join(name)
}

/// Final column of the last curve row.
fn last_mean10(dir: &Path) -> f64 {
    let text = std::fs::read_to_string(dir.join("curve.csv")).unwrap();
    text.lines()
        .last()
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

/// Remembers whether `x >= 5` was ever seen: reward 1 the first time only.
fn planted_rewards(xs: &[f64]) -> Vec<f64> {
    let mut seen = false;
    xs[1..]
        .iter()
        .map(|&x| {
            let r = if x >= 5.0 && !seen { 1.0 } else { 0.0 };
            seen |= x >= 5.0;
            r
        })
        .collect()
}

fn jsonl(traces: &[Vec<f64>], rewards: impl Fn(&[f64]) -> Vec<f64>) -> String {
    traces
        .iter()
        .map(|xs| {
            let states: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
            serde_json::json!({ "states": states, "rewards": rewards(xs) }).to_string() + "\n"
        })
        .collect()
}

fn sample_traces() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 6.0, 7.0, 1.0],
        vec![0.0, 2.0, 8.0],
        vec![0.0, 1.0, 3.0, 9.0, 6.0],
        vec![0.0, 5.0, 2.0, 5.0],
        vec![0.0, 6.0, 7.0, 8.0, 2.0, 9.0],
    ]
}

#[test]
fn qsrm_run_directory_holds_the_curve_and_reproducibility_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let machine = shipped("office-discrete-post_inner_offices.srm");
    let out = srm(&[
        "train",
        "--method",
        "qsrm",
        "--env",
        "office-discrete",
        "--task",
        "post_inner_offices",
        "--srm",
        path(&machine),
        "--seed",
        "1",
        "--steps",
        "300000",
        "--out",
        path(&run),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let curve = std::fs::read_to_string(run.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("step,performance,mean10"));
    assert_eq!(curve.lines().count(), 1 + 300_000 / 5_000);
    for file in [
        "config.toml",
        "checkpoint.json",
        "episodes.csv",
        "curve.svg",
    ] {
        assert!(run.join(file).exists(), "{file} missing");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 1);
    assert!(meta["solver_identity"]
        .as_str()
        .is_some_and(|s| !s.is_empty()));

    let eval = srm(&["eval", path(&run), "--seed", "4"]);
    assert_eq!(code(&eval), 0, "{}", stderr(&eval));
    assert!(
        stdout(&eval).contains("normalized 1.0000"),
        "{}",
        stdout(&eval)
    );
}

#[test]
fn labeled_machine_method_rejects_mountain_car() {
    let dir = tempfile::tempdir().unwrap();
    let out = srm(&[
        "train",
        "--method",
        "qrm",
        "--env",
        "mountain-car",
        "--task",
        "rml",
        "--seed",
        "1",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("qrm"), "{}", stderr(&out));
}

#[test]
fn training_without_a_seed_is_a_config_error() {
    let out = srm(&[
        "train",
        "--method",
        "q",
        "--env",
        "office-discrete",
        "--task",
        "post_inner_offices",
        "--steps",
        "10",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("seed"));
}

#[test]
fn unknown_method_is_a_config_error() {
    let out = srm(&[
        "train",
        "--method",
        "sarsa",
        "--env",
        "office-discrete",
        "--task",
        "post_inner_offices",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("lsrm-ft"));
}

#[test]
fn template_learning_writes_numbered_hypotheses() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("ft");
    let out = srm(&[
        "train",
        "--method",
        "lsrm-ft",
        "--f",
        "3",
        "--env",
        "office-discrete",
        "--task",
        "post_inner_offices",
        "--seed",
        "2",
        "--steps",
        "3000",
        "--out",
        path(&run),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for file in [
        "srm_000.txt",
        "srm_000.dot",
        "learned.srm",
        "counterexamples.jsonl",
        "inference_log.csv",
    ] {
        assert!(run.join(file).exists(), "{file} missing");
    }
    let learned =
        Srm::from_toml(&std::fs::read_to_string(run.join("learned.srm")).unwrap()).unwrap();
    let check = srm(&[
        "validate",
        path(&run.join("learned.srm")),
        "--env",
        "office-discrete",
    ]);
    assert_eq!(code(&check), 0, "{}", stdout(&check));
    assert!(learned.state_count() >= 1);
}

#[test]
fn offline_inference_recovers_a_planted_two_state_machine() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces.jsonl");
    std::fs::write(&traces, jsonl(&sample_traces(), planted_rewards)).unwrap();
    let guards = dir.path().join("guards.txt");
    std::fs::write(&guards, "; threshold\n(>= x 5.0)\n(< x 5.0)\n").unwrap();
    let out_dir = dir.path().join("gf");
    let out = srm(&[
        "infer",
        "--traces",
        path(&traces),
        "--mode",
        "gf",
        "--formulas",
        path(&guards),
        "--vars",
        "x",
        "--out",
        path(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("2 states"), "{}", stdout(&out));
    let learned =
        Srm::from_toml(&std::fs::read_to_string(out_dir.join("srm.txt")).unwrap()).unwrap();
    assert_eq!(learned.state_count(), 2);
    for xs in sample_traces()
        .iter()
        .chain(&[vec![0.0, 9.0, 9.0, 0.0, 9.0]])
    {
        let states: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
        assert_eq!(learned.run(&states).unwrap(), planted_rewards(xs));
    }
    assert!(out_dir.join("srm.dot").exists());
    assert!(std::fs::read_to_string(out_dir.join("transcript.smt2"))
        .unwrap()
        .contains("(check-sat)"));
}

#[test]
fn all_zero_traces_need_one_state() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("zero.jsonl");
    std::fs::write(
        &traces,
        jsonl(&sample_traces(), |xs| vec![0.0; xs.len() - 1]),
    )
    .unwrap();
    let out = srm(&[
        "infer",
        "--traces",
        path(&traces),
        "--mode",
        "ft",
        "--f",
        "1",
        "--vars",
        "x",
        "--out",
        path(&dir.path().join("ft")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("1 states"), "{}", stdout(&out));
}

#[test]
fn corrupt_trace_line_is_reported_by_number() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("bad.jsonl");
    let good = jsonl(&sample_traces()[..1], planted_rewards);
    std::fs::write(
        &traces,
        format!("{good}{{\"states\": [[0.0], [1.0]], \"rewards\": \n"),
    )
    .unwrap();
    let out = srm(&[
        "infer",
        "--traces",
        path(&traces),
        "--mode",
        "ft",
        "--f",
        "1",
        "--vars",
        "x",
        "--out",
        path(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn too_small_a_budget_is_an_inference_failure() {
    let dir = tempfile::tempdir().unwrap();
    let traces = dir.path().join("traces.jsonl");
    std::fs::write(&traces, jsonl(&sample_traces(), planted_rewards)).unwrap();
    let guards = dir.path().join("guards.txt");
    std::fs::write(&guards, "(>= x 5.0)\n(< x 5.0)\n").unwrap();
    let out = srm(&[
        "infer",
        "--traces",
        path(&traces),
        "--mode",
        "gf",
        "--formulas",
        path(&guards),
        "--vars",
        "x",
        "--max-states",
        "1",
        "--out",
        path(&dir.path().join("o")),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn shipped_machines_are_valid() {
    for (file, env) in [
        ("office-discrete-post_inner_offices.srm", "office-discrete"),
        ("office-discrete-diagonal_run.srm", "office-discrete"),
        (
            "office-continuous-post_inner_offices.srm",
            "office-continuous",
        ),
        ("office-continuous-diagonal_run.srm", "office-continuous"),
        ("mountain-car-rml.srm", "mountain-car"),
    ] {
        let out = srm(&["validate", path(&shipped(file)), "--env", env]);
        assert_eq!(code(&out), 0, "{file}: {}", stdout(&out));
    }
}

#[test]
fn shipped_machines_match_the_builtin_tasks() {
    let out = srm(&["machine", "--env", "mountain-car", "--task", "rml"]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        stdout(&out),
        std::fs::read_to_string(shipped("mountain-car-rml.srm")).unwrap()
    );
}

#[test]
fn incomplete_machine_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("partial.srm");
    std::fs::write(&file, "variables = [\"x\"]\nstates = 1\ninitial = 0\n\n[[transitions]]\nfrom = 0\nguard = \"(>= x 1.0)\"\nto = 0\nreward = 0.0\n").unwrap();
    let out = srm(&["validate", path(&file)]);
    assert_eq!(code(&out), 1);
}

#[test]
fn a_machine_is_equivalent_to_itself() {
    let machine = shipped("office-discrete-post_inner_offices.srm");
    let out = srm(&[
        "equiv",
        path(&machine),
        path(&machine),
        "--env",
        "office-discrete",
        "--task",
        "post_inner_offices",
        "--trials",
        "500",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(
        stdout(&out).starts_with("0 mismatches in 500 episodes"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn different_machines_show_a_first_mismatch() {
    let a = shipped("office-discrete-post_inner_offices.srm");
    let b = shipped("office-discrete-diagonal_run.srm");
    let out = srm(&[
        "equiv",
        path(&a),
        path(&b),
        "--env",
        "office-discrete",
        "--task",
        "post_inner_offices",
        "--trials",
        "500",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(!stdout(&out).starts_with("0 mismatches"));
    assert!(stdout(&out).contains("first at trial"));
}

#[test]
fn seed_range_fans_out_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("multi");
    let out = srm(&[
        "train",
        "--method",
        "q",
        "--env",
        "office-discrete",
        "--task",
        "post_inner_offices",
        "--seeds",
        "1..3",
        "--steps",
        "10000",
        "--jobs",
        "2",
        "--out",
        path(&root),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for s in 1..=3 {
        assert!(root.join(format!("seed{s}")).join("curve.csv").exists());
    }
    assert!(root.join("mean_curve.csv").exists());
    assert!(root.join("curves.svg").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "method = \"qsrm\"\nenv = \"office-discrete\"\ntask = \"diagonal_run\"\nseed = 5\nsteps = 20000\nout = \"{}\"\n\n[tabular]\nepsilon = 0.3\n",
            path(&run)
        ),
    )
    .unwrap();
    let out = srm(&["train", "--config", path(&config), "--steps", "10000"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["steps"], 10_000);
    let resolved = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(resolved.contains("epsilon = 0.3"), "{resolved}");
    assert!(last_mean10(&run).is_finite());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "method = \"q\"\nenv = \"office-discrete\"\ntask = \"diagonal_run\"\nseed = 5\nlearning_rate = 3\n").unwrap();
    let out = srm(&["train", "--config", path(&config)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn methods_lists_the_registry() {
    let out = srm(&["methods"]);
    assert_eq!(code(&out), 0);
    let names: Vec<String> = stdout(&out)
        .lines()
        .filter_map(|l| l.split_whitespace().next().map(String::from))
        .collect();
    assert_eq!(
        names,
        [
            "q",
            "dqn-stack",
            "qrm",
            "qsrm",
            "dqrm",
            "dqsrm",
            "lsrm-gf",
            "lsrm-ft"
        ]
    );
}
