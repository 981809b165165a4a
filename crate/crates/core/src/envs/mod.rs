//! Environments (Office World, shifted Mountain Car) and the task wrappers
//! that hide a reward machine behind the standard `(state, reward)` stream.

mod mountain_car;
mod office;
mod task;

pub use mountain_car::{MountainCar, MountainCarParams};
pub use office::{Direction, OfficeLayout, OfficeWorld};
pub use task::{
    Labeling, RewardMachine, RmEdge, Stage, TaskRegion, TaskSpec, TaskStep, TaskWrapper, TASK_NAMES,
};

use crate::srm::Domain;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("unknown environment '{0}'")]
    UnknownEnv(String),
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("task '{task}' cannot run on environment '{env}'")]
    Incompatible { task: String, env: String },
    #[error("task '{0}' has no labeled variant")]
    NoLabels(String),
    #[error("bad configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    /// The environment's own signal; tasks replace it with machine rewards.
    pub signal: f64,
    pub terminal: bool,
}

pub trait Env: Send {
    fn name(&self) -> &str;
    fn variables(&self) -> &[String];
    fn action_count(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> StepOutcome;
    /// Region every reachable state lies in.
    fn domain(&self) -> Domain;
    /// Per-variable `(low, high)` range of reachable states.
    fn bounds(&self) -> Vec<(f64, f64)>;
    /// Dense indexing of a finite state space; `None` for continuous ones.
    fn grid(&self) -> Option<GridIndex>;
    /// A copy with the same configuration and a fresh noise stream.
    fn fresh(&self, seed: u64) -> Box<dyn Env>;
}

/// Row-major index of integer grid states `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GridIndex {
    pub width: usize,
    pub height: usize,
}

impl GridIndex {
    pub fn size(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, state: &[f64]) -> Option<usize> {
        let (x, y) = (state[0], state[1]);
        if x.fract() != 0.0 || y.fract() != 0.0 || x < 0.0 || y < 0.0 {
            return None;
        }
        let (x, y) = (x as usize, y as usize);
        (x < self.width && y < self.height).then_some(x + self.width * y)
    }
}

pub const ENV_NAMES: &[&str] = &["office-discrete", "office-continuous", "mountain-car"];

/// Builds an environment by name; `seed` drives any stochastic dynamics.
pub fn make_env(name: &str, seed: u64) -> Result<Box<dyn Env>, EnvError> {
    match name {
        "office-discrete" => Ok(Box::new(OfficeWorld::discrete(OfficeLayout::builtin()))),
        "office-continuous" => Ok(Box::new(OfficeWorld::continuous(
            OfficeLayout::builtin(),
            0.0,
            seed,
        ))),
        "mountain-car" => Ok(Box::new(MountainCar::new(MountainCarParams::default()))),
        other => Err(EnvError::UnknownEnv(other.to_string())),
    }
}

/// Task family an environment belongs to.
pub fn env_family(name: &str) -> Option<&'static str> {
    match name {
        "office-discrete" | "office-continuous" => Some("office"),
        "mountain-car" => Some("mountain-car"),
        _ => None,
    }
}

/// Wraps a named environment with a named task.
pub fn make_task(env_name: &str, task: &str, seed: u64) -> Result<TaskWrapper, EnvError> {
    let spec = TaskSpec::builtin(task)?;
    let env = make_env(env_name, seed)?;
    TaskWrapper::new(env, &spec)
}

/// The labeled variant of an Office World task: labeling function plus the
/// reward machine mirroring the task's hidden machine.
pub fn make_labeled(env_name: &str, task: &str) -> Result<(Labeling, RewardMachine), EnvError> {
    let spec = TaskSpec::builtin(task)?;
    if spec.family != "office" || env_family(env_name) != Some("office") {
        return Err(EnvError::NoLabels(task.to_string()));
    }
    let env = make_env(env_name, 0)?;
    Ok((spec.labeling(env.variables())?, spec.reward_machine()))
}
