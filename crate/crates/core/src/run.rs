//! Training runs by method name: configuration, the strategy registry,
//! run directories and policy checkpoints.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::envs::{make_env, EnvError, OfficeLayout, TaskSpec, TaskWrapper};
use crate::eval::{curves_svg, evaluate_policy, mean_curve, Curve, EvalSchedule};
use crate::infer::{parse_guards, InferConfig, InferError, Mode};
use crate::learn::{
    train_with, DeepAgent, DeepHyper, DeepPolicy, EpisodeLog, Hyper, LabeledModel, LearnError,
    PassThrough, Policy, RewardModel, TabularAgent, TabularPolicy, TrainReport,
};
use crate::lsrm::{lsrm_train, LsrmConfig, LsrmError, RunDir, Storage};
use crate::smt::SolverConfig;
use crate::srm::{Srm, SrmError};
use crate::{seeded, Stream};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Lsrm(#[from] LsrmError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Machine(#[from] SrmError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// How a failed run should be reported to a caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Inference,
    SolverUnknown,
    Other,
}

impl RunError {
    pub fn kind(&self) -> FailureKind {
        match self {
            RunError::Config(_) | RunError::Env(_) | RunError::Machine(_) => FailureKind::Config,
            RunError::Learn(LearnError::Hyper(_) | LearnError::NotTabular(_)) => {
                FailureKind::Config
            }
            RunError::Infer(
                InferError::Corpus { .. }
                | InferError::Config(_)
                | InferError::Malformed(_)
                | InferError::Empty,
            ) => FailureKind::Config,
            RunError::Lsrm(LsrmError::Unknown { .. }) => FailureKind::SolverUnknown,
            RunError::Lsrm(LsrmError::Unsat { .. } | LsrmError::Infer(_)) | RunError::Infer(_) => {
                FailureKind::Inference
            }
            _ => FailureKind::Other,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(io(path))
}

pub fn read_file(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(io(path))
}

/// Solver overrides; unset fields keep the `SRM_SMT_*` environment values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub program: Option<String>,
    pub args: Option<Vec<String>>,
    pub timeout_secs: Option<f64>,
}

impl SolverSettings {
    pub fn resolve(&self) -> SolverConfig {
        let mut cfg = SolverConfig::from_env();
        if let Some(p) = &self.program {
            cfg.program = p.clone();
        }
        if let Some(a) = &self.args {
            cfg.args = a.clone();
        }
        if let Some(t) = self.timeout_secs {
            cfg.timeout = Duration::from_secs_f64(t);
        }
        cfg
    }
}

/// Everything a training run depends on. Written back, fully resolved, into
/// the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: String,
    pub env: String,
    /// Built-in task name or path to a task file.
    pub task: String,
    pub seed: Option<u64>,
    /// Environment steps; the method's default when unset.
    pub steps: Option<u64>,
    /// Run directory; `runs/<method>-<env>-<task>-seed<seed>` when unset.
    pub out: Option<PathBuf>,
    /// Machine file for qsrm/dqsrm; the task's own machine when unset.
    pub srm: Option<PathBuf>,
    /// Guard file for lsrm-gf; the task's region guards when unset.
    pub formulas: Option<PathBuf>,
    /// Formulas per state for lsrm-ft.
    pub f: Option<usize>,
    pub max_states: usize,
    pub storage: Storage,
    /// Frames fed to the dqn-stack baseline.
    pub frame_stack: usize,
    pub tabular: Hyper,
    pub deep: DeepHyper,
    /// The method's default when unset.
    pub schedule: Option<EvalSchedule>,
    pub solver: SolverSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: String::new(),
            env: String::new(),
            task: String::new(),
            seed: None,
            steps: None,
            out: None,
            srm: None,
            formulas: None,
            f: None,
            max_states: InferConfig::default().max_states,
            storage: Storage::default(),
            frame_stack: 100,
            tabular: Hyper::default(),
            deep: DeepHyper::default(),
            schedule: None,
            solver: SolverSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn require_seed(&self) -> Result<u64, RunError> {
        self.seed
            .ok_or_else(|| RunError::Config("a seed is required".into()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| {
            let task = Path::new(&self.task)
                .file_stem()
                .map_or(self.task.clone(), |s| s.to_string_lossy().into_owned());
            let seed = self
                .seed
                .map_or("unseeded".to_string(), |s| format!("seed{s}"));
            PathBuf::from("runs").join(format!("{}-{}-{task}-{seed}", self.method, self.env))
        })
    }

    fn is_deep(&self, task: &TaskWrapper) -> bool {
        task.env().grid().is_none()
    }

    pub fn schedule_for(&self, task: &TaskWrapper) -> EvalSchedule {
        self.schedule.clone().unwrap_or_else(|| {
            if self.is_deep(task) {
                EvalSchedule::deep()
            } else {
                EvalSchedule::tabular()
            }
        })
    }

    pub fn steps_for(&self, task: &TaskWrapper) -> u64 {
        self.steps
            .unwrap_or(if self.is_deep(task) { 300_000 } else { 500_000 })
    }

    /// Fills every defaulted field from the task so the written
    /// configuration replays the run without further defaults.
    pub fn resolved(&self, task: &TaskWrapper) -> RunConfig {
        RunConfig {
            steps: Some(self.steps_for(task)),
            schedule: Some(self.schedule_for(task)),
            out: Some(self.out_dir()),
            ..self.clone()
        }
    }
}

pub fn load_task_spec(task: &str) -> Result<TaskSpec, RunError> {
    match TaskSpec::builtin(task) {
        Ok(spec) => Ok(spec),
        Err(EnvError::UnknownTask(_)) if Path::new(task).is_file() => Ok(TaskSpec::from_toml(
            &read_file(Path::new(task))?,
            Some(&OfficeLayout::builtin()),
        )?),
        Err(e) => Err(e.into()),
    }
}

pub fn load_task(env: &str, task: &str, seed: u64) -> Result<TaskWrapper, RunError> {
    let spec = load_task_spec(task)?;
    Ok(TaskWrapper::new(make_env(env, seed)?, &spec)?)
}

fn labeled_model(task: &TaskWrapper) -> Result<LabeledModel, RunError> {
    let spec = task.spec();
    if spec.family != "office" {
        return Err(RunError::Config(format!(
            "task '{}' has no labeling function; reward machines need an Office World task",
            spec.name
        )));
    }
    Ok(LabeledModel {
        labeling: spec.labeling(task.variables())?,
        machine: spec.reward_machine(),
    })
}

fn load_srm(config: &RunConfig, task: &TaskWrapper) -> Result<Srm, RunError> {
    match &config.srm {
        Some(path) => {
            let srm = Srm::from_toml(&read_file(path)?)?;
            if srm.variables() != task.variables() {
                return Err(RunError::Config(format!(
                    "machine variables {:?} differ from the environment's {:?}",
                    srm.variables(),
                    task.variables()
                )));
            }
            Ok(srm)
        }
        None => Ok(task.hidden_srm().clone()),
    }
}

/// Reward side of a method that is given its model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ModelKind {
    Pass,
    Labeled,
    Symbolic,
}

enum BuiltModel {
    Pass(PassThrough),
    Labeled(LabeledModel),
    Symbolic(Srm),
}

impl BuiltModel {
    fn as_dyn(&self) -> &dyn RewardModel {
        match self {
            BuiltModel::Pass(m) => m,
            BuiltModel::Labeled(m) => m,
            BuiltModel::Symbolic(m) => m,
        }
    }

    fn checkpoint(&self) -> CheckpointModel {
        match self {
            BuiltModel::Pass(_) => CheckpointModel::PassThrough,
            BuiltModel::Labeled(_) => CheckpointModel::Labeled,
            BuiltModel::Symbolic(m) => CheckpointModel::Symbolic { srm: m.to_toml() },
        }
    }
}

impl ModelKind {
    fn build(self, config: &RunConfig, task: &TaskWrapper) -> Result<BuiltModel, RunError> {
        Ok(match self {
            ModelKind::Pass => BuiltModel::Pass(PassThrough),
            ModelKind::Labeled => BuiltModel::Labeled(labeled_model(task)?),
            ModelKind::Symbolic => BuiltModel::Symbolic(load_srm(config, task)?),
        })
    }
}

/// Reward model a checkpointed policy was trained against.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CheckpointModel {
    PassThrough,
    Labeled,
    Symbolic { srm: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CheckpointPolicy {
    Tabular(TabularPolicy),
    Deep(DeepPolicy),
}

/// Final greedy policy of a run with what is needed to evaluate it again.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub method: String,
    pub env: String,
    pub task: String,
    pub model: CheckpointModel,
    pub policy: CheckpointPolicy,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Checkpoint, RunError> {
        let path = if path.is_dir() {
            path.join("checkpoint.json")
        } else {
            path.to_path_buf()
        };
        serde_json::from_str(&read_file(&path)?)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }

    /// Mean greedy return over `schedule.runs` episodes and the same value
    /// divided by the task's maximum return.
    pub fn evaluate(&self, schedule: &EvalSchedule, seed: u64) -> Result<(f64, f64), RunError> {
        let task = load_task(&self.env, &self.task, seed)?;
        let model = match &self.model {
            CheckpointModel::PassThrough => BuiltModel::Pass(PassThrough),
            CheckpointModel::Labeled => BuiltModel::Labeled(labeled_model(&task)?),
            CheckpointModel::Symbolic { srm } => BuiltModel::Symbolic(Srm::from_toml(srm)?),
        };
        let policy: &dyn Policy = match &self.policy {
            CheckpointPolicy::Tabular(p) => p,
            CheckpointPolicy::Deep(p) => p,
        };
        let mut rng = seeded(seed, Stream::Eval);
        let perf = evaluate_policy(policy, model.as_dyn(), &task, schedule, &mut rng)?;
        Ok((perf, perf / task.max_return()))
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub curve: Curve,
    pub episodes: Vec<EpisodeLog>,
    pub steps: u64,
    pub checkpoint: Checkpoint,
    /// Final hypothesis of learning methods.
    pub learned: Option<Srm>,
}

/// A training method selectable by name.
pub trait Strategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    /// Rejects environment/task combinations the method cannot run.
    fn check(&self, config: &RunConfig, task: &TaskWrapper) -> Result<(), RunError>;
    /// Trains on `task`; artifacts beyond the summary go under `out`.
    fn run(
        &self,
        config: &RunConfig,
        task: &mut TaskWrapper,
        out: &Path,
    ) -> Result<RunSummary, RunError>;
}

fn need_grid(name: &str, task: &TaskWrapper) -> Result<(), RunError> {
    if task.env().grid().is_none() {
        return Err(RunError::Config(format!(
            "method {name} is tabular and needs a discrete environment, not {}",
            task.env().name()
        )));
    }
    Ok(())
}

fn need_continuous(name: &str, task: &TaskWrapper) -> Result<(), RunError> {
    if task.env().grid().is_some() {
        return Err(RunError::Config(format!(
            "method {name} uses function approximation; pick a continuous environment, not {}",
            task.env().name()
        )));
    }
    Ok(())
}

fn no_inference_inputs(name: &str, config: &RunConfig) -> Result<(), RunError> {
    if config.formulas.is_some() || config.f.is_some() {
        return Err(RunError::Config(format!(
            "method {name} takes no formulas file and no --f"
        )));
    }
    Ok(())
}

fn check_model(
    name: &str,
    kind: ModelKind,
    config: &RunConfig,
    task: &TaskWrapper,
) -> Result<(), RunError> {
    no_inference_inputs(name, config)?;
    if kind != ModelKind::Symbolic && config.srm.is_some() {
        return Err(RunError::Config(format!(
            "method {name} takes no machine file"
        )));
    }
    if kind == ModelKind::Labeled {
        labeled_model(task)?;
    }
    Ok(())
}

struct Tabular {
    name: &'static str,
    summary: &'static str,
    model: ModelKind,
}

impl Strategy for Tabular {
    fn name(&self) -> &'static str {
        self.name
    }
    fn summary(&self) -> &'static str {
        self.summary
    }
    fn check(&self, config: &RunConfig, task: &TaskWrapper) -> Result<(), RunError> {
        need_grid(self.name, task)?;
        check_model(self.name, self.model, config, task)
    }
    fn run(
        &self,
        config: &RunConfig,
        task: &mut TaskWrapper,
        _out: &Path,
    ) -> Result<RunSummary, RunError> {
        let model = self.model.build(config, task)?;
        let seed = config.require_seed()?;
        let mut agent = TabularAgent::for_task(task, model.as_dyn(), &config.tabular)?;
        let report = train_seeded(task, model.as_dyn(), &mut agent, config, seed)?;
        Ok(summary(
            config,
            report,
            model.checkpoint(),
            CheckpointPolicy::Tabular(agent.policy()),
            None,
        ))
    }
}

struct Deep {
    name: &'static str,
    summary: &'static str,
    model: ModelKind,
    stacked: bool,
}

impl Deep {
    fn hyper(&self, config: &RunConfig) -> DeepHyper {
        if self.stacked {
            DeepHyper {
                stack: config.frame_stack,
                ..config.deep.clone()
            }
        } else {
            config.deep.clone()
        }
    }
}

impl Strategy for Deep {
    fn name(&self) -> &'static str {
        self.name
    }
    fn summary(&self) -> &'static str {
        self.summary
    }
    fn check(&self, config: &RunConfig, task: &TaskWrapper) -> Result<(), RunError> {
        need_continuous(self.name, task)?;
        check_model(self.name, self.model, config, task)?;
        Ok(self.hyper(config).check()?)
    }
    fn run(
        &self,
        config: &RunConfig,
        task: &mut TaskWrapper,
        _out: &Path,
    ) -> Result<RunSummary, RunError> {
        let model = self.model.build(config, task)?;
        let seed = config.require_seed()?;
        let hp = self.hyper(config);
        let mut rng = seeded(seed, Stream::Agent);
        let mut agent = DeepAgent::for_task(task, model.as_dyn(), &hp, &mut rng)?;
        let mut eval_rng = seeded(seed, Stream::Eval);
        let schedule = config.schedule_for(task);
        let steps = config.steps_for(task);
        let report = train_with(
            task,
            model.as_dyn(),
            &mut agent,
            &schedule,
            steps,
            &mut rng,
            &mut eval_rng,
            &mut |_, _| {},
        )?;
        Ok(summary(
            config,
            report,
            model.checkpoint(),
            CheckpointPolicy::Deep(agent.policy()),
            None,
        ))
    }
}

fn train_seeded(
    task: &mut TaskWrapper,
    model: &dyn RewardModel,
    agent: &mut TabularAgent,
    config: &RunConfig,
    seed: u64,
) -> Result<TrainReport, RunError> {
    let (mut rng, mut eval_rng) = (seeded(seed, Stream::Agent), seeded(seed, Stream::Eval));
    let schedule = config.schedule_for(task);
    let steps = config.steps_for(task);
    Ok(train_with(
        task,
        model,
        agent,
        &schedule,
        steps,
        &mut rng,
        &mut eval_rng,
        &mut |_, _| {},
    )?)
}

fn summary(
    config: &RunConfig,
    report: TrainReport,
    model: CheckpointModel,
    policy: CheckpointPolicy,
    learned: Option<Srm>,
) -> RunSummary {
    RunSummary {
        curve: report.curve,
        episodes: report.episodes,
        steps: report.steps,
        checkpoint: Checkpoint {
            method: config.method.clone(),
            env: config.env.clone(),
            task: config.task.clone(),
            model,
            policy,
        },
        learned,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InferMode {
    GivenFormulas,
    Templates,
}

struct Lsrm {
    name: &'static str,
    summary: &'static str,
    mode: InferMode,
}

impl Lsrm {
    fn mode(&self, config: &RunConfig, task: &TaskWrapper) -> Result<Mode, RunError> {
        match self.mode {
            InferMode::GivenFormulas => match &config.formulas {
                Some(path) => Ok(Mode::Given(parse_guards(
                    &read_file(path)?,
                    task.variables(),
                )?)),
                None => Ok(Mode::Given(task.spec().guard_set())),
            },
            InferMode::Templates => match config.f {
                Some(0) | None => Err(RunError::Config(format!(
                    "method {} needs --f, the number of formulas per state (at least 1)",
                    self.name
                ))),
                Some(f) => Ok(Mode::Templates { formulas: f }),
            },
        }
    }
}

impl Strategy for Lsrm {
    fn name(&self) -> &'static str {
        self.name
    }
    fn summary(&self) -> &'static str {
        self.summary
    }
    fn check(&self, config: &RunConfig, task: &TaskWrapper) -> Result<(), RunError> {
        if config.srm.is_some() {
            return Err(RunError::Config(format!(
                "method {} learns its machine and takes no machine file",
                self.name
            )));
        }
        match self.mode {
            InferMode::GivenFormulas if config.f.is_some() => {
                return Err(RunError::Config(format!(
                    "method {} takes no --f",
                    self.name
                )))
            }
            InferMode::Templates if config.formulas.is_some() => {
                return Err(RunError::Config(format!(
                    "method {} takes no formulas file",
                    self.name
                )))
            }
            _ => {}
        }
        if config.max_states == 0 {
            return Err(RunError::Config("max_states must be positive".into()));
        }
        self.mode(config, task).map(|_| ())
    }
    fn run(
        &self,
        config: &RunConfig,
        task: &mut TaskWrapper,
        out: &Path,
    ) -> Result<RunSummary, RunError> {
        let seed = config.require_seed()?;
        let lsrm = LsrmConfig {
            mode: self.mode(config, task)?,
            infer: InferConfig {
                solver: config.solver.resolve(),
                domain: task.env().domain(),
                max_states: config.max_states,
                grow_formulas: false,
            },
            storage: config.storage,
        };
        let schedule = config.schedule_for(task);
        let steps = config.steps_for(task);
        let mut dir = RunDir::create(out).map_err(io(out))?;
        let (mut rng, mut eval_rng) = (seeded(seed, Stream::Agent), seeded(seed, Stream::Eval));
        let basic = PassThrough;
        let (report, policy) = if task.env().grid().is_some() {
            let mut agent = TabularAgent::for_task(task, &basic, &config.tabular)?;
            let report = lsrm_train(
                task,
                &mut agent,
                &lsrm,
                &schedule,
                steps,
                &mut rng,
                &mut eval_rng,
                &mut dir,
            );
            (report, CheckpointPolicy::Tabular(agent.policy()))
        } else {
            config.deep.check()?;
            let mut agent = DeepAgent::for_task(task, &basic, &config.deep, &mut rng)?;
            let report = lsrm_train(
                task,
                &mut agent,
                &lsrm,
                &schedule,
                steps,
                &mut rng,
                &mut eval_rng,
                &mut dir,
            );
            (report, CheckpointPolicy::Deep(agent.policy()))
        };
        let report = match report {
            Ok(r) => r,
            Err(e) => {
                if let LsrmError::Unsat {
                    transcript,
                    examples,
                    ..
                }
                | LsrmError::Unknown {
                    transcript,
                    examples,
                    ..
                } = &e
                {
                    write_file(&out.join("failed_query.smt2"), &transcript.join("\n"))?;
                    dir.write_examples(examples).map_err(io(out))?;
                }
                return Err(e.into());
            }
        };
        dir.write_examples(&report.examples).map_err(io(out))?;
        dir.write_events(&report.events).map_err(io(out))?;
        write_file(&out.join("learned.srm"), &report.hypothesis.to_toml())?;
        write_file(&out.join("learned.dot"), &report.hypothesis.to_dot())?;
        let train = TrainReport {
            curve: report.curve,
            episodes: report.episodes,
            steps: report.steps,
        };
        let model = CheckpointModel::Symbolic {
            srm: report.hypothesis.to_toml(),
        };
        Ok(summary(
            config,
            train,
            model,
            policy,
            Some(report.hypothesis),
        ))
    }
}

/// Every method, in a fixed order.
pub fn registry() -> Vec<Box<dyn Strategy>> {
    vec![
        Box::new(Tabular {
            name: "q",
            summary: "tabular Q-learning on raw states",
            model: ModelKind::Pass,
        }),
        Box::new(Deep {
            name: "dqn-stack",
            summary: "deep Q-learning on a stack of recent states",
            model: ModelKind::Pass,
            stacked: true,
        }),
        Box::new(Tabular {
            name: "qrm",
            summary: "tabular learning with the task's labeled reward machine",
            model: ModelKind::Labeled,
        }),
        Box::new(Tabular {
            name: "qsrm",
            summary: "tabular learning with a given symbolic reward machine",
            model: ModelKind::Symbolic,
        }),
        Box::new(Deep {
            name: "dqrm",
            summary: "deep learning with the task's labeled reward machine",
            model: ModelKind::Labeled,
            stacked: false,
        }),
        Box::new(Deep {
            name: "dqsrm",
            summary: "deep learning with a given symbolic reward machine",
            model: ModelKind::Symbolic,
            stacked: false,
        }),
        Box::new(Lsrm {
            name: "lsrm-gf",
            summary: "learn the machine from counterexamples over given guard formulas",
            mode: InferMode::GivenFormulas,
        }),
        Box::new(Lsrm {
            name: "lsrm-ft",
            summary: "learn the machine from counterexamples with box-formula templates",
            mode: InferMode::Templates,
        }),
    ]
}

pub fn strategy(name: &str) -> Result<Box<dyn Strategy>, RunError> {
    registry()
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| {
            let names: Vec<&str> = registry().iter().map(|s| s.name()).collect();
            RunError::Config(format!(
                "unknown method '{name}' (known: {})",
                names.join(", ")
            ))
        })
}

/// Identity of everything that can change a run's result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub version: String,
    pub solver_program: String,
    pub solver_args: Vec<String>,
    pub solver_identity: String,
    pub steps: u64,
    pub episodes: usize,
    pub final_mean10: Option<f64>,
    pub elapsed_secs: f64,
}

/// Checks the configuration, trains, and writes the run directory:
/// `config.toml`, `metadata.json`, `curve.csv`, `curve.svg`, `episodes.csv`,
/// `checkpoint.json`, plus method-specific artifacts.
pub fn run_training(config: &RunConfig) -> Result<RunSummary, RunError> {
    let seed = config.require_seed()?;
    let method = strategy(&config.method)?;
    let mut task = load_task(&config.env, &config.task, seed)?;
    config.tabular.check()?;
    method.check(config, &task)?;
    let resolved = config.resolved(&task);
    let out = &resolved.out_dir();
    std::fs::create_dir_all(out).map_err(io(out))?;
    write_file(&out.join("config.toml"), &resolved.to_toml())?;
    let start = Instant::now();
    let summary = method.run(&resolved, &mut task, out)?;
    let solver = config.solver.resolve();
    let meta = Metadata {
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        solver_identity: solver.identity(),
        solver_program: solver.program,
        solver_args: solver.args,
        steps: summary.steps,
        episodes: summary.episodes.len(),
        final_mean10: summary.curve.last_mean10(),
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    write_file(
        &out.join("metadata.json"),
        &serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )?;
    summary
        .curve
        .export_csv(&out.join("curve.csv"))
        .map_err(io(out))?;
    write_file(
        &out.join("curve.svg"),
        &curves_svg(&[(config.method.clone(), summary.curve.clone())]),
    )?;
    let mut episodes = String::from("episode,step,return,epsilon\n");
    for e in &summary.episodes {
        episodes.push_str(&format!(
            "{},{},{},{}\n",
            e.episode, e.step, e.ret, e.epsilon
        ));
    }
    write_file(&out.join("episodes.csv"), &episodes)?;
    write_file(
        &out.join("checkpoint.json"),
        &serde_json::to_string(&summary.checkpoint).expect("checkpoint serializes"),
    )?;
    Ok(summary)
}

/// Mean curve over per-seed run directories, written as `mean_curve.csv`
/// and `curves.svg` (every seed plus the mean) under `out`.
pub fn aggregate_seeds(
    out: &Path,
    runs: &[(u64, PathBuf)],
    window: usize,
    max_return: f64,
) -> Result<Option<Curve>, RunError> {
    let mut curves = Vec::new();
    for (seed, dir) in runs {
        let path = dir.join("curve.csv");
        let text = read_file(&path)?;
        let curve = Curve::from_csv(&text, window, max_return)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        curves.push((format!("seed {seed}"), curve));
    }
    let only: Vec<Curve> = curves.iter().map(|(_, c)| c.clone()).collect();
    let mean = mean_curve(&only);
    if let Some(m) = &mean {
        m.export_csv(&out.join("mean_curve.csv")).map_err(io(out))?;
        curves.push(("mean".into(), m.clone()));
    }
    write_file(&out.join("curves.svg"), &curves_svg(&curves))?;
    Ok(mean)
}
