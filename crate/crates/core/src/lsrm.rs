//! Learning with an unknown reward machine: train against a hypothesis,
//! collect episodes whose rewards contradict it, re-infer, start over.

use std::cell::RefCell;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::envs::TaskWrapper;
use crate::eval::{evaluate_policy, Curve, EvalSchedule};
use crate::infer::{
    infer_minimal, Counterexample, CounterexampleSet, InferConfig, InferError, Mode, Outcome,
};
use crate::learn::{EpisodeLog, LearnError, Learner, RewardModel};
use crate::srm::{Srm, SrmError, StateId};

#[derive(Debug, thiserror::Error)]
pub enum LsrmError {
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error("no consistent machine with at most {max_states} states ({} counterexamples)", examples.len())]
    Unsat {
        max_states: usize,
        examples: CounterexampleSet,
        transcript: Vec<String>,
    },
    #[error("solver returned unknown at {states} states ({} counterexamples)", examples.len())]
    Unknown {
        states: usize,
        examples: CounterexampleSet,
        transcript: Vec<String>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<SrmError> for LsrmError {
    fn from(e: SrmError) -> Self {
        LsrmError::Learn(LearnError::Machine(e))
    }
}

/// One state, one universal self-loop with reward 0.
pub fn init_basic_srm(signature: &[String]) -> Srm {
    Srm::basic(signature.to_vec())
}

/// A hypothesis machine as a reward model. Inferred machines carry no
/// terminal states, so the model remembers which transitions were last seen
/// to coincide with a genuine episode end and sends them to one extra
/// absorbing terminal state (index `srm.state_count()`). Without this,
/// transitions looping on the final reward are bootstrapped from for model
/// states other than the live one, and their values grow without bound.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    srm: Srm,
    ending: RefCell<Vec<bool>>,
}

impl Hypothesis {
    pub fn new(srm: Srm) -> Hypothesis {
        let ending = RefCell::new(vec![false; srm.transitions().len()]);
        Hypothesis { srm, ending }
    }

    pub fn srm(&self) -> &Srm {
        &self.srm
    }

    pub fn into_srm(self) -> Srm {
        self.srm
    }

    pub fn absorbing(&self) -> StateId {
        self.srm.state_count()
    }

    /// Indices of transitions currently treated as ending the episode.
    pub fn ending(&self) -> Vec<usize> {
        self.ending
            .borrow()
            .iter()
            .enumerate()
            .filter(|(_, e)| **e)
            .map(|(i, _)| i)
            .collect()
    }
}

impl RewardModel for Hypothesis {
    fn state_count(&self) -> usize {
        self.srm.state_count() + 1
    }
    fn initial(&self) -> StateId {
        self.srm.initial()
    }
    fn is_terminal(&self, state: StateId) -> bool {
        state == self.absorbing()
    }
    fn transition(
        &self,
        state: StateId,
        next: &[f64],
        _env_reward: f64,
    ) -> Result<(f64, StateId), SrmError> {
        if state == self.absorbing() {
            return Ok((0.0, state));
        }
        let i = self.srm.fire(state, next)?;
        let t = &self.srm.transitions()[i];
        Ok((
            t.reward,
            if self.ending.borrow()[i] {
                self.absorbing()
            } else {
                t.to
            },
        ))
    }
    fn note_step(&self, live: StateId, next: &[f64], terminal: bool) {
        if live == self.absorbing() {
            return;
        }
        if let Ok(i) = self.srm.fire(live, next) {
            self.ending.borrow_mut()[i] = terminal;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Storage {
    /// The episode up to and including the first mismatching step.
    #[default]
    Prefix,
    /// The whole episode; the rest is played out with the current policy
    /// and nothing is learned from it.
    Full,
}

#[derive(Debug, Clone)]
pub struct LsrmConfig {
    pub mode: Mode,
    pub infer: InferConfig,
    pub storage: Storage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceEvent {
    pub episode: u64,
    pub step: u64,
    pub counterexamples: usize,
    pub states: usize,
    pub solver_time: Duration,
    pub assertions: usize,
}

#[derive(Debug, Clone)]
pub struct LsrmReport {
    pub hypothesis: Srm,
    pub events: Vec<InferenceEvent>,
    pub examples: CounterexampleSet,
    pub curve: Curve,
    pub episodes: Vec<EpisodeLog>,
    pub steps: u64,
    /// Step count and agent random state when training last restarted from
    /// fresh value structures.
    pub restart: (u64, ChaCha8Rng),
}

/// Receives each new hypothesis, numbered from 1 (0 is the basic machine).
pub trait HypothesisSink {
    fn hypothesis(
        &mut self,
        index: usize,
        srm: &Srm,
        event: Option<&InferenceEvent>,
    ) -> std::io::Result<()>;
}

impl HypothesisSink for () {
    fn hypothesis(&mut self, _: usize, _: &Srm, _: Option<&InferenceEvent>) -> std::io::Result<()> {
        Ok(())
    }
}

/// Writes `srm_NNN.txt` (machine file) and `srm_NNN.dot` per hypothesis.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> std::io::Result<RunDir> {
        std::fs::create_dir_all(root)?;
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn hypothesis_path(&self, index: usize) -> PathBuf {
        self.root.join(format!("srm_{index:03}.txt"))
    }

    pub fn write_examples(&self, examples: &CounterexampleSet) -> std::io::Result<()> {
        std::fs::write(self.root.join("counterexamples.jsonl"), examples.to_jsonl())
    }

    pub fn write_events(&self, events: &[InferenceEvent]) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(self.root.join("inference_log.csv"))
            .map_err(std::io::Error::other)?;
        w.write_record([
            "index",
            "episode",
            "step",
            "counterexamples",
            "states",
            "solver_seconds",
            "assertions",
        ])
        .map_err(std::io::Error::other)?;
        for (i, e) in events.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                e.episode.to_string(),
                e.step.to_string(),
                e.counterexamples.to_string(),
                e.states.to_string(),
                format!("{:.3}", e.solver_time.as_secs_f64()),
                e.assertions.to_string(),
            ])
            .map_err(std::io::Error::other)?;
        }
        w.flush()
    }
}

impl HypothesisSink for RunDir {
    fn hypothesis(
        &mut self,
        index: usize,
        srm: &Srm,
        _event: Option<&InferenceEvent>,
    ) -> std::io::Result<()> {
        std::fs::write(self.hypothesis_path(index), srm.to_toml())?;
        std::fs::write(self.root.join(format!("srm_{index:03}.dot")), srm.to_dot())
    }
}

fn infer(
    examples: &CounterexampleSet,
    signature: &[String],
    config: &LsrmConfig,
) -> Result<(Srm, crate::infer::InferStats), LsrmError> {
    let result = infer_minimal(examples, signature, &config.mode, &config.infer)?;
    match result.outcome {
        Outcome::Found { srm, .. } => Ok((srm, result.stats)),
        Outcome::UnsatAtBudget => Err(LsrmError::Unsat {
            max_states: config.infer.max_states,
            examples: examples.clone(),
            transcript: result.transcript,
        }),
        Outcome::SolverUnknown { states } => Err(LsrmError::Unknown {
            states,
            examples: examples.clone(),
            transcript: result.transcript,
        }),
    }
}

/// Trains `learner` on `task` for `total_steps` steps starting from the
/// basic machine. Every step compares the environment reward with the
/// hypothesis's; the first disagreement in an episode records a
/// counterexample, replaces the hypothesis by a minimal consistent one,
/// resets the learner and restarts the episode.
#[allow(clippy::too_many_arguments)]
pub fn lsrm_train<L: Learner>(
    task: &mut TaskWrapper,
    learner: &mut L,
    config: &LsrmConfig,
    schedule: &EvalSchedule,
    total_steps: u64,
    rng: &mut ChaCha8Rng,
    eval_rng: &mut ChaCha8Rng,
    sink: &mut dyn HypothesisSink,
) -> Result<LsrmReport, LsrmError> {
    let signature = task.variables().to_vec();
    let mut hypothesis = Hypothesis::new(init_basic_srm(&signature));
    sink.hypothesis(0, hypothesis.srm(), None)?;
    learner.reinitialize(hypothesis.state_count(), rng);
    let mut report = LsrmReport {
        hypothesis: hypothesis.srm().clone(),
        events: Vec::new(),
        examples: CounterexampleSet::new(),
        curve: Curve::new(schedule.window, task.max_return()),
        episodes: Vec::new(),
        steps: 0,
        restart: (0, rng.clone()),
    };
    let mut episode = 0u64;
    while report.steps < total_steps {
        let mut s = task.reset();
        learner.begin_episode(&s);
        let mut u = hypothesis.initial();
        let mut states = vec![s.clone()];
        let mut rewards = Vec::new();
        let mut ret = 0.0;
        loop {
            let a = learner.act(u, &s, rng);
            let step = task.step(a);
            ret += step.reward;
            report.steps += 1;
            states.push(step.state.clone());
            rewards.push(step.reward);
            let (predicted, _) = hypothesis.srm().step_from(u, &step.state)?;
            if predicted != step.reward {
                if config.storage == Storage::Full && !step.done() {
                    play_out(task, &*learner, hypothesis.srm(), &mut states, &mut rewards)?;
                }
                report.examples.push(Counterexample::new(states, rewards)?);
                let (next, stats) = infer(&report.examples, &signature, config)?;
                hypothesis = Hypothesis::new(next);
                let event = InferenceEvent {
                    episode,
                    step: report.steps,
                    counterexamples: report.examples.len(),
                    states: hypothesis.srm().state_count(),
                    solver_time: stats.elapsed,
                    assertions: stats.assertions,
                };
                log::info!(
                    "hypothesis {} at step {}: {} states",
                    report.events.len() + 1,
                    report.steps,
                    event.states
                );
                sink.hypothesis(report.events.len() + 1, hypothesis.srm(), Some(&event))?;
                report.events.push(event);
                learner.reinitialize(hypothesis.state_count(), rng);
                report.restart = (report.steps, rng.clone());
                checkpoint(
                    &mut report,
                    &*learner,
                    &hypothesis,
                    task,
                    schedule,
                    eval_rng,
                )?;
                break;
            }
            hypothesis.note_step(u, &step.state, step.terminal);
            let (_, next_u) = learner.observe(
                &hypothesis,
                &s,
                a,
                &step.state,
                step.reward,
                step.terminal,
                u,
                rng,
            )?;
            checkpoint(
                &mut report,
                &*learner,
                &hypothesis,
                task,
                schedule,
                eval_rng,
            )?;
            let done = step.done();
            s = step.state;
            u = next_u;
            if done || report.steps >= total_steps {
                break;
            }
        }
        report.episodes.push(EpisodeLog {
            episode,
            step: report.steps,
            ret,
            epsilon: learner.exploration(),
        });
        episode += 1;
    }
    report.hypothesis = hypothesis.into_srm();
    Ok(report)
}

fn checkpoint<L: Learner>(
    report: &mut LsrmReport,
    learner: &L,
    hypothesis: &Hypothesis,
    task: &TaskWrapper,
    schedule: &EvalSchedule,
    eval_rng: &mut ChaCha8Rng,
) -> Result<(), LsrmError> {
    if report.steps.is_multiple_of(schedule.interval) {
        let perf = evaluate_policy(
            learner.policy().as_ref(),
            hypothesis,
            task,
            schedule,
            eval_rng,
        )?;
        report.curve.push(report.steps, perf);
    }
    Ok(())
}

/// Finishes the running episode with the greedy policy (no learning).
fn play_out<L: Learner>(
    task: &mut TaskWrapper,
    learner: &L,
    hypothesis: &Srm,
    states: &mut Vec<Vec<f64>>,
    rewards: &mut Vec<f64>,
) -> Result<(), LsrmError> {
    let policy = learner.policy();
    let mut memory = crate::learn::PolicyMemory::default();
    let mut u = hypothesis.initial();
    // feed the earlier observations through the policy's episode memory
    for w in states.windows(2) {
        policy.act(&mut memory, u, &w[0]);
        u = hypothesis.step_from(u, &w[1])?.1;
    }
    loop {
        let s = states.last().expect("non-empty").clone();
        let step = task.step(policy.act(&mut memory, u, &s));
        u = hypothesis.step_from(u, &step.state)?.1;
        let done = step.done();
        states.push(step.state);
        rewards.push(step.reward);
        if done {
            return Ok(());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub trial: usize,
    pub states: Vec<Vec<f64>>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub mismatches: usize,
    pub first: Option<Mismatch>,
}

/// Runs `trials` uniformly random episodes on fresh copies of `task` and
/// compares the reward sequences the two machines assign to each.
pub fn equivalence_sample_check(
    a: &Srm,
    b: &Srm,
    task: &TaskWrapper,
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EquivalenceReport, SrmError> {
    let mut report = EquivalenceReport {
        trials,
        mismatches: 0,
        first: None,
    };
    for trial in 0..trials {
        let mut env = task.fresh(rng.gen());
        let mut states = vec![env.reset()];
        loop {
            let step = env.step(rng.gen_range(0..env.action_count()));
            let done = step.done();
            states.push(step.state);
            if done {
                break;
            }
        }
        let (left, right) = (a.run(&states)?, b.run(&states)?);
        if left != right {
            report.mismatches += 1;
            if report.first.is_none() {
                report.first = Some(Mismatch {
                    trial,
                    states,
                    left,
                    right,
                });
            }
        }
    }
    Ok(report)
}
