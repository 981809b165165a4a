//! `srm`: train, infer, validate, compare and evaluate symbolic reward
//! machines from the command line.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use srm_core::envs::make_env;
use srm_core::eval::EvalSchedule;
use srm_core::infer::{infer_minimal, parse_guards, CounterexampleSet, InferConfig, Mode, Outcome};
use srm_core::lsrm::{equivalence_sample_check, Storage};
use srm_core::run::{
    self, load_task, read_file, write_file, Checkpoint, FailureKind, RunConfig, RunError,
};
use srm_core::smt::SolverConfig;
use srm_core::srm::{Domain, Srm};
use srm_core::{seeded, Stream};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INFERENCE: u8 = 3;
const EXIT_SOLVER_UNKNOWN: u8 = 4;

#[derive(Parser)]
#[command(
    name = "srm",
    version,
    about = "Symbolic reward machines: learning with, and learning of, reward automata"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one method on one task; `--seeds` runs one child job per seed.
    Train(TrainArgs),
    /// Infer a minimal machine from a counterexample corpus (JSON lines).
    Infer(InferArgs),
    /// Check that a machine file is deterministic and complete.
    Validate(ValidateArgs),
    /// Compare the rewards two machines assign along random episodes.
    Equiv(EquivArgs),
    /// Evaluate the final policy of a run directory.
    Eval(EvalArgs),
    /// Print a task's own machine.
    Machine(MachineArgs),
    /// List the training methods.
    Methods,
}

#[derive(Args)]
struct TrainArgs {
    /// Configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    env: Option<String>,
    /// Built-in task name or task file.
    #[arg(long)]
    task: Option<String>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seeds to fan out, as `1..10` (inclusive) or `1,4,7`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Machine file for qsrm and dqsrm.
    #[arg(long)]
    srm: Option<PathBuf>,
    /// Guard formulas for lsrm-gf, one per line.
    #[arg(long)]
    formulas: Option<PathBuf>,
    /// Formulas per state for lsrm-ft.
    #[arg(long)]
    f: Option<usize>,
    #[arg(long)]
    max_states: Option<usize>,
    #[arg(long, value_enum)]
    storage: Option<StorageArg>,
    /// Parallel child jobs under `--seeds`.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StorageArg {
    Prefix,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Gf,
    Ft,
}

#[derive(Args)]
struct InferArgs {
    /// Counterexamples: one `{"states": [[..], ..], "rewards": [..]}` per line.
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Guard formulas (gf mode).
    #[arg(long)]
    formulas: Option<PathBuf>,
    /// Formulas per state (ft mode).
    #[arg(long)]
    f: Option<usize>,
    /// Largest number of states tried.
    #[arg(long, default_value_t = 6)]
    max_states: usize,
    /// Environment supplying variable names and the state domain.
    #[arg(long, required_unless_present = "vars")]
    env: Option<String>,
    /// Comma-separated variable names, when no environment is given.
    #[arg(long, value_delimiter = ',')]
    vars: Option<Vec<String>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    srm: PathBuf,
    /// Check over this environment's state domain instead of all reals.
    #[arg(long)]
    env: Option<String>,
}

#[derive(Args)]
struct EquivArgs {
    left: PathBuf,
    right: PathBuf,
    #[arg(long)]
    env: String,
    #[arg(long)]
    task: String,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory or checkpoint file.
    run: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[arg(long, default_value_t = 500)]
    cap: usize,
}

#[derive(Args)]
struct MachineArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    task: String,
    /// Graphviz instead of the machine file format.
    #[arg(long)]
    dot: bool,
}

/// A failure with a known exit status.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
struct Failure {
    kind: FailureKind,
    message: String,
}

fn failure(kind: FailureKind, message: impl Into<String>) -> anyhow::Error {
    Failure {
        kind,
        message: message.into(),
    }
    .into()
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let kind = e.chain().find_map(|c| {
        c.downcast_ref::<Failure>()
            .map(|f| f.kind)
            .or_else(|| c.downcast_ref::<RunError>().map(RunError::kind))
    });
    match kind {
        Some(FailureKind::Config) => EXIT_CONFIG,
        Some(FailureKind::Inference) => EXIT_INFERENCE,
        Some(FailureKind::SolverUnknown) => EXIT_SOLVER_UNKNOWN,
        Some(FailureKind::Other) | None => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Train(a) => train(a),
        Cmd::Infer(a) => infer(a),
        Cmd::Validate(a) => validate(a),
        Cmd::Equiv(a) => equiv(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Machine(a) => machine(a),
        Cmd::Methods => {
            for s in run::registry() {
                println!("{:<10} {}", s.name(), s.summary());
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn config_error(message: impl Into<String>) -> anyhow::Error {
    failure(FailureKind::Config, message)
}

fn merged_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(path) => RunConfig::from_toml(&read_file(path)?)?,
        None => RunConfig::default(),
    };
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = &a.$field {
                c.$field = v.clone().into();
            }
        };
    }
    take!(method);
    take!(env);
    take!(task);
    take!(seed);
    take!(steps);
    take!(out);
    take!(srm);
    take!(formulas);
    take!(f);
    if let Some(m) = a.max_states {
        c.max_states = m;
    }
    if let Some(s) = a.storage {
        c.storage = match s {
            StorageArg::Prefix => Storage::Prefix,
            StorageArg::Full => Storage::Full,
        };
    }
    for (name, value) in [
        ("--method", &c.method),
        ("--env", &c.env),
        ("--task", &c.task),
    ] {
        if value.is_empty() {
            bail!(config_error(format!(
                "{name} is required (flag or configuration file)"
            )));
        }
    }
    Ok(c)
}

/// `a..b` (inclusive) or a comma list.
fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || config_error(format!("bad seed list '{spec}': use 1..10 or 1,2,3"));
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn train(a: TrainArgs) -> Result<()> {
    let config = merged_config(&a)?;
    if let Some(spec) = &a.seeds {
        return fan_out(config, &parse_seeds(spec)?, a.jobs);
    }
    if config.seed.is_none() {
        bail!(config_error("a seed is required: pass --seed or --seeds"));
    }
    let summary = run::run_training(&config)?;
    let out = config.out_dir();
    println!("run directory: {}", out.display());
    println!(
        "steps {} episodes {}",
        summary.steps,
        summary.episodes.len()
    );
    match summary.curve.last_mean10() {
        Some(m) => println!("final mean10 {m:.4}"),
        None => println!("no checkpoint was evaluated"),
    }
    if let Some(srm) = &summary.learned {
        println!("learned machine: {} states", srm.state_count());
    }
    Ok(())
}

/// Runs one child process per seed, at most `jobs` at a time, then writes
/// the mean curve over the seeds.
fn fan_out(config: RunConfig, seeds: &[u64], jobs: Option<usize>) -> Result<()> {
    let root = config.out.clone().unwrap_or_else(|| {
        RunConfig {
            seed: None,
            ..config.clone()
        }
        .out_dir()
    });
    std::fs::create_dir_all(&root).with_context(|| root.display().to_string())?;
    let base = root.join("base_config.toml");
    write_file(
        &base,
        &RunConfig {
            seed: None,
            out: None,
            ..config.clone()
        }
        .to_toml(),
    )?;
    let exe = std::env::current_exe()?;
    let jobs = jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let runs: Vec<(u64, PathBuf)> = seeds
        .iter()
        .map(|s| (*s, root.join(format!("seed{s}"))))
        .collect();
    let mut failed = Vec::new();
    for batch in runs.chunks(jobs) {
        let mut children = Vec::new();
        for (seed, dir) in batch {
            let child = Command::new(&exe)
                .args(["train", "--config"])
                .arg(&base)
                .args(["--seed", &seed.to_string(), "--out"])
                .arg(dir)
                .stdout(std::process::Stdio::null())
                .spawn()
                .context("starting a child job")?;
            children.push((*seed, child));
        }
        for (seed, mut child) in children {
            let status = child.wait()?;
            if !status.success() {
                failed.push((seed, status.code()));
            }
        }
    }
    if let Some((seed, code)) = failed.first() {
        let kind = match code.map(|c| c as u8) {
            Some(EXIT_CONFIG) => FailureKind::Config,
            Some(EXIT_INFERENCE) => FailureKind::Inference,
            Some(EXIT_SOLVER_UNKNOWN) => FailureKind::SolverUnknown,
            _ => FailureKind::Other,
        };
        return Err(failure(
            kind,
            format!(
                "{} of {} seed jobs failed, first seed {seed}",
                failed.len(),
                runs.len()
            ),
        ));
    }
    let task = load_task(&config.env, &config.task, 0)?;
    let window = config.schedule_for(&task).window;
    let mean = run::aggregate_seeds(&root, &runs, window, task.max_return())?;
    println!("run directory: {}", root.display());
    if let Some(m) = mean.and_then(|c| c.last_mean10()) {
        println!("mean final mean10 over {} seeds {m:.4}", runs.len());
    }
    Ok(())
}

fn signature(env: &Option<String>, vars: &Option<Vec<String>>) -> Result<(Vec<String>, Domain)> {
    match (env, vars) {
        (Some(name), _) => {
            let e = make_env(name, 0).map_err(RunError::from)?;
            Ok((e.variables().to_vec(), e.domain()))
        }
        (None, Some(v)) => Ok((v.clone(), Domain::unbounded())),
        (None, None) => Err(config_error("pass --env or --vars")),
    }
}

fn infer(a: InferArgs) -> Result<()> {
    let (vars, domain) = signature(&a.env, &a.vars)?;
    let corpus = CounterexampleSet::from_jsonl(&read_file(&a.traces)?)
        .map_err(RunError::Infer)
        .with_context(|| a.traces.display().to_string())?;
    let mode = match a.mode {
        ModeArg::Gf => {
            let path = a
                .formulas
                .as_ref()
                .ok_or_else(|| config_error("gf mode needs --formulas"))?;
            Mode::Given(parse_guards(&read_file(path)?, &vars).map_err(RunError::from)?)
        }
        ModeArg::Ft => Mode::Templates {
            formulas: a.f.ok_or_else(|| config_error("ft mode needs --f"))?,
        },
    };
    let config = InferConfig {
        solver: SolverConfig::from_env(),
        domain,
        max_states: a.max_states,
        grow_formulas: false,
    };
    let result = infer_minimal(&corpus, &vars, &mode, &config).map_err(RunError::from)?;
    std::fs::create_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
    let transcript = a.out.join("transcript.smt2");
    write_file(&transcript, &result.transcript.join("\n"))?;
    match result.outcome {
        Outcome::Found { srm, states } => {
            write_file(&a.out.join("srm.txt"), &srm.to_toml())?;
            write_file(&a.out.join("srm.dot"), &srm.to_dot())?;
            println!(
                "{states} states, {} rounds, {:.3}s",
                result.stats.rounds,
                result.stats.elapsed.as_secs_f64()
            );
            Ok(())
        }
        Outcome::UnsatAtBudget => Err(failure(
            FailureKind::Inference,
            format!(
                "no consistent machine with at most {} states; last query in {}",
                a.max_states,
                transcript.display()
            ),
        )),
        Outcome::SolverUnknown { states } => Err(failure(
            FailureKind::SolverUnknown,
            format!(
                "solver returned unknown at {states} states; query in {}",
                transcript.display()
            ),
        )),
    }
}

fn load_machine(path: &Path) -> Result<Srm> {
    Srm::from_toml(&read_file(path)?)
        .map_err(RunError::from)
        .with_context(|| path.display().to_string())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let srm = load_machine(&a.srm)?;
    let domain = match &a.env {
        Some(name) => make_env(name, 0).map_err(RunError::from)?.domain(),
        None => Domain::unbounded(),
    };
    let report = srm
        .validate(&domain, &SolverConfig::from_env())
        .map_err(|e| anyhow!("solver: {e}"))?;
    println!("{report}");
    if report.is_valid() {
        Ok(())
    } else {
        Err(failure(
            FailureKind::Other,
            "machine is not deterministic and complete",
        ))
    }
}

fn equiv(a: EquivArgs) -> Result<()> {
    let (left, right) = (load_machine(&a.left)?, load_machine(&a.right)?);
    let task = load_task(&a.env, &a.task, a.seed)?;
    let mut rng = seeded(a.seed, Stream::Env);
    let report = equivalence_sample_check(&left, &right, &task, a.trials, &mut rng)
        .map_err(RunError::from)?;
    println!(
        "{} mismatches in {} episodes",
        report.mismatches, report.trials
    );
    if let Some(m) = report.first {
        if let Some(t) = (0..m.left.len()).find(|&t| m.left[t] != m.right[t]) {
            println!(
                "first at trial {} step {t}: state {:?}, rewards {} vs {}",
                m.trial,
                m.states[t + 1],
                m.left[t],
                m.right[t]
            );
        }
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&a.run)?;
    let schedule = EvalSchedule {
        runs: a.runs,
        cap: a.cap,
        ..EvalSchedule::tabular()
    };
    let (perf, normalized) = checkpoint.evaluate(&schedule, a.seed)?;
    println!(
        "{} on {}/{}: mean return {perf:.4}, normalized {normalized:.4}",
        checkpoint.method, checkpoint.env, checkpoint.task
    );
    Ok(())
}

fn machine(a: MachineArgs) -> Result<()> {
    let task = load_task(&a.env, &a.task, 0)?;
    let srm = task.hidden_srm();
    print!("{}", if a.dot { srm.to_dot() } else { srm.to_toml() });
    Ok(())
}
