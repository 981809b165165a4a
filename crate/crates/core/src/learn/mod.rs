//! Value-based learners. Every learner keeps one value structure per state
//! of a reward model and updates all of them from each environment step.
//! Plain Q-learning is the one-state pass-through model; QRM and QSRM differ
//! only in the model they are given.

mod cross_product;
mod deep;
mod mlp;
mod tabular;

pub use cross_product::{cross_product_check, CrossProductReport};
pub use deep::{train_deep, DeepAgent, DeepHyper, DeepPolicy, Encoder};
pub use mlp::{Adam, Mlp, MlpGrads};
pub use tabular::{train_tabular, QTable, TabularAgent, TabularPolicy};

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::envs::{Labeling, RewardMachine, TaskWrapper};
use crate::eval::{evaluate_policy, Curve, EvalSchedule};
use crate::srm::{Srm, SrmError, StateId};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error(transparent)]
    Machine(#[from] SrmError),
    #[error("environment '{0}' has no finite state index")]
    NotTabular(String),
    #[error("value estimate diverged: {0}")]
    Diverged(String),
    #[error("bad hyperparameters: {0}")]
    Hyper(String),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearningRate {
    Constant(f64),
    /// `alpha / (1 + visits(s, a))`: satisfies the Robbins-Monro conditions.
    Harmonic(f64),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub alpha: LearningRate,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            alpha: LearningRate::Constant(0.1),
            gamma: 0.95,
            epsilon: 0.15,
        }
    }
}

impl Hyper {
    pub fn check(&self) -> Result<(), LearnError> {
        let a = match self.alpha {
            LearningRate::Constant(a) | LearningRate::Harmonic(a) => a,
        };
        if !(0.0..1.0).contains(&a) {
            return Err(LearnError::Hyper(format!("alpha {a} outside [0, 1)")));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(LearnError::Hyper(format!(
                "gamma {} outside (0, 1]",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(LearnError::Hyper(format!(
                "epsilon {} outside [0, 1]",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Reward side of a learner: what reward and successor state a given model
/// state would produce on the observed next environment state.
pub trait RewardModel {
    fn state_count(&self) -> usize;
    fn initial(&self) -> StateId;
    fn is_terminal(&self, state: StateId) -> bool;
    fn transition(
        &self,
        state: StateId,
        next: &[f64],
        env_reward: f64,
    ) -> Result<(f64, StateId), SrmError>;
    /// Sees every real step before it is learned from: the live state, the
    /// next observation and whether the episode genuinely ended there.
    fn note_step(&self, _live: StateId, _next: &[f64], _terminal: bool) {}
}

impl RewardModel for Srm {
    fn state_count(&self) -> usize {
        Srm::state_count(self)
    }
    fn initial(&self) -> StateId {
        Srm::initial(self)
    }
    fn is_terminal(&self, state: StateId) -> bool {
        Srm::is_terminal(self, state)
    }
    fn transition(
        &self,
        state: StateId,
        next: &[f64],
        _env_reward: f64,
    ) -> Result<(f64, StateId), SrmError> {
        self.step_from(state, next)
    }
}

/// Single state, environment reward as is.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThrough;

impl RewardModel for PassThrough {
    fn state_count(&self) -> usize {
        1
    }
    fn initial(&self) -> StateId {
        0
    }
    fn is_terminal(&self, _state: StateId) -> bool {
        false
    }
    fn transition(
        &self,
        _state: StateId,
        _next: &[f64],
        env_reward: f64,
    ) -> Result<(f64, StateId), SrmError> {
        Ok((env_reward, 0))
    }
}

/// Reward machine read through a labeling function.
#[derive(Debug, Clone)]
pub struct LabeledModel {
    pub labeling: Labeling,
    pub machine: RewardMachine,
}

impl RewardModel for LabeledModel {
    fn state_count(&self) -> usize {
        self.machine.state_count
    }
    fn initial(&self) -> StateId {
        self.machine.initial
    }
    fn is_terminal(&self, state: StateId) -> bool {
        self.machine.terminal.contains(&state)
    }
    fn transition(
        &self,
        state: StateId,
        next: &[f64],
        _env_reward: f64,
    ) -> Result<(f64, StateId), SrmError> {
        Ok(self.machine.step(state, &self.labeling.labels(next)))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Draws a uniform variate and an action index every call, in that order,
/// so the random stream does not depend on which branch is taken.
pub fn epsilon_greedy(values: &[f64], epsilon: f64, rng: &mut ChaCha8Rng) -> usize {
    let coin: f64 = rng.gen();
    let random = rng.gen_range(0..values.len());
    if coin < epsilon {
        random
    } else {
        argmax(values)
    }
}

/// Per-episode memory of a policy (recent observations for frame stacks).
#[derive(Debug, Clone, Default)]
pub struct PolicyMemory {
    pub frames: VecDeque<Vec<f64>>,
}

/// Greedy policy over `(environment state, model state)`.
pub trait Policy {
    fn act(&self, memory: &mut PolicyMemory, model_state: StateId, state: &[f64]) -> usize;
}

/// An agent keeping one value structure per reward-model state.
pub trait Learner {
    /// Called with the first observation of every episode.
    fn begin_episode(&mut self, s0: &[f64]);
    fn act(&mut self, model_state: StateId, state: &[f64], rng: &mut ChaCha8Rng) -> usize;
    /// Probability of a uniformly random action in `act`.
    fn exploration(&self) -> f64;
    /// Learns from one environment step, for every model state. Returns the
    /// live model state's `(reward, successor)`.
    #[allow(clippy::too_many_arguments)]
    fn observe(
        &mut self,
        model: &dyn RewardModel,
        state: &[f64],
        action: usize,
        next: &[f64],
        env_reward: f64,
        env_terminal: bool,
        live: StateId,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, StateId), LearnError>;
    /// Drops everything learned and sizes the value structures for a model
    /// with `model_states` states.
    fn reinitialize(&mut self, model_states: usize, rng: &mut ChaCha8Rng);
    fn policy(&self) -> Box<dyn Policy>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: u64,
    /// Total steps when the episode ended.
    pub step: u64,
    pub ret: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub curve: Curve,
    pub episodes: Vec<EpisodeLog>,
    pub steps: u64,
}

/// Runs `learner` on `task` for `total_steps` environment steps with
/// greedy checkpoints on `schedule`. `on_episode` sees the learner after
/// every finished episode.
#[allow(clippy::too_many_arguments)]
pub fn train_with<L: Learner>(
    task: &mut TaskWrapper,
    model: &dyn RewardModel,
    learner: &mut L,
    schedule: &EvalSchedule,
    total_steps: u64,
    rng: &mut ChaCha8Rng,
    eval_rng: &mut ChaCha8Rng,
    on_episode: &mut dyn FnMut(&L, &EpisodeLog),
) -> Result<TrainReport, LearnError> {
    let mut report = TrainReport {
        curve: Curve::new(schedule.window, task.max_return()),
        ..TrainReport::default()
    };
    let mut episode = 0;
    while report.steps < total_steps {
        let mut s = task.reset();
        learner.begin_episode(&s);
        let mut u = model.initial();
        let mut ret = 0.0;
        loop {
            let a = learner.act(u, &s, rng);
            let step = task.step(a);
            ret += step.reward;
            model.note_step(u, &step.state, step.terminal);
            let (_, next_u) = learner.observe(
                model,
                &s,
                a,
                &step.state,
                step.reward,
                step.terminal,
                u,
                rng,
            )?;
            report.steps += 1;
            if report.steps.is_multiple_of(schedule.interval) {
                let perf =
                    evaluate_policy(learner.policy().as_ref(), model, task, schedule, eval_rng)?;
                report.curve.push(report.steps, perf);
            }
            let done = step.done();
            s = step.state;
            u = next_u;
            if done || report.steps >= total_steps {
                break;
            }
        }
        let log = EpisodeLog {
            episode,
            step: report.steps,
            ret,
            epsilon: learner.exploration(),
        };
        on_episode(learner, &log);
        report.episodes.push(log);
        episode += 1;
    }
    Ok(report)
}

/// Upper bound on values under rewards in `[0, r_max]` and tables started at 1.
pub fn value_bound(r_max: f64, gamma: f64) -> f64 {
    if gamma >= 1.0 {
        f64::INFINITY
    } else {
        (r_max / (1.0 - gamma)).max(1.0)
    }
}
