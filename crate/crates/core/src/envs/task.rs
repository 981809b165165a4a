use std::collections::BTreeSet;

use serde::Deserialize;

use super::{env_family, Env, EnvError, OfficeLayout};
use crate::logic::{parse_formula, Formula, StateView};
use crate::srm::{Srm, SrmError, StateId, Transition};

pub const TASK_NAMES: &[&str] = &["post_inner_offices", "diagonal_run", "rml"];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    name: String,
    family: String,
    max_return: f64,
    step_cap: usize,
    #[serde(default)]
    regions: Vec<RegionFile>,
    stages: Vec<StageFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionFile {
    label: String,
    guard: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageFile {
    region: String,
    reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRegion {
    pub label: String,
    pub guard: Formula,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    /// Index into [`TaskSpec::regions`].
    pub region: usize,
    pub reward: f64,
}

/// A sequential task: reach each stage's region in order, collecting the
/// stage reward on entry. Office tasks take their regions from the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub family: String,
    pub max_return: f64,
    pub step_cap: usize,
    pub regions: Vec<TaskRegion>,
    pub stages: Vec<Stage>,
}

impl TaskSpec {
    pub fn builtin(name: &str) -> Result<TaskSpec, EnvError> {
        let text = match name {
            "post_inner_offices" => include_str!("../../tasks/post_inner_offices.toml"),
            "diagonal_run" => include_str!("../../tasks/diagonal_run.toml"),
            "rml" => include_str!("../../tasks/rml.toml"),
            other => return Err(EnvError::UnknownTask(other.to_string())),
        };
        TaskSpec::from_toml(text, Some(&OfficeLayout::builtin()))
    }

    pub fn from_toml(text: &str, layout: Option<&OfficeLayout>) -> Result<TaskSpec, EnvError> {
        let file: TaskFile = toml::from_str(text).map_err(|e| EnvError::Config(e.to_string()))?;
        let mut regions = Vec::new();
        for r in &file.regions {
            let guard = parse_formula(&r.guard)
                .map_err(|e| EnvError::Config(format!("region {}: {e}", r.label)))?;
            regions.push(TaskRegion {
                label: r.label.clone(),
                guard,
            });
        }
        let mut stages = Vec::new();
        for s in &file.stages {
            let idx = match regions.iter().position(|r| r.label == s.region) {
                Some(i) => i,
                None => {
                    let guard = layout
                        .filter(|_| file.family == "office")
                        .and_then(|l| l.region(&s.region))
                        .ok_or_else(|| {
                            EnvError::Config(format!("unknown region '{}'", s.region))
                        })?;
                    regions.push(TaskRegion {
                        label: s.region.clone(),
                        guard,
                    });
                    regions.len() - 1
                }
            };
            stages.push(Stage {
                region: idx,
                reward: s.reward,
            });
        }
        if stages.is_empty()
            || file.max_return.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            || file.step_cap == 0
        {
            return Err(EnvError::Config(format!(
                "task '{}' is degenerate",
                file.name
            )));
        }
        Ok(TaskSpec {
            name: file.name,
            family: file.family,
            max_return: file.max_return,
            step_cap: file.step_cap,
            regions,
            stages,
        })
    }

    /// Hidden machine: stage `i` moves to `i+1` with the stage reward when its
    /// region is entered; the final state is terminal.
    pub fn srm(&self, variables: &[String]) -> Result<Srm, SrmError> {
        let k = self.stages.len();
        let mut ts = Vec::new();
        for (i, stage) in self.stages.iter().enumerate() {
            let g = self.regions[stage.region].guard.clone();
            ts.push(Transition {
                from: i,
                guard: g.clone(),
                to: i + 1,
                reward: stage.reward,
            });
            ts.push(Transition {
                from: i,
                guard: Formula::not(g),
                to: i,
                reward: 0.0,
            });
        }
        ts.push(Transition {
            from: k,
            guard: Formula::Lit(true),
            to: k,
            reward: 0.0,
        });
        Srm::new(variables.to_vec(), k + 1, 0, ts)?.with_terminal([k])
    }

    /// Distinct guards of the hidden machine, in order of first use.
    pub fn guard_set(&self) -> Vec<Formula> {
        let srm = self
            .srm(&self.variables_hint())
            .expect("task machine is well formed");
        let mut out: Vec<Formula> = Vec::new();
        for t in srm.transitions() {
            if !out.contains(&t.guard) {
                out.push(t.guard.clone());
            }
        }
        out
    }

    fn variables_hint(&self) -> Vec<String> {
        let mut vars = BTreeSet::new();
        for r in &self.regions {
            vars.extend(r.guard.real_vars());
        }
        vars.into_iter().collect()
    }

    pub fn labeling(&self, variables: &[String]) -> Result<Labeling, EnvError> {
        for r in &self.regions {
            r.guard
                .check_signature(variables)
                .map_err(|e| EnvError::Config(e.to_string()))?;
        }
        Ok(Labeling {
            variables: variables.to_vec(),
            regions: self.regions.clone(),
        })
    }

    /// Label-driven mirror of [`TaskSpec::srm`].
    pub fn reward_machine(&self) -> RewardMachine {
        let k = self.stages.len();
        let edges = self
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| RmEdge {
                from: i,
                label: self.regions[s.region].label.clone(),
                to: i + 1,
                reward: s.reward,
            })
            .collect();
        RewardMachine {
            state_count: k + 1,
            initial: 0,
            terminal: [k].into_iter().collect(),
            edges,
        }
    }
}

/// Maps a state to the labels of the regions containing it.
#[derive(Debug, Clone)]
pub struct Labeling {
    variables: Vec<String>,
    regions: Vec<TaskRegion>,
}

impl Labeling {
    pub fn labels(&self, state: &[f64]) -> BTreeSet<String> {
        let view = StateView::new(&self.variables, state);
        self.regions
            .iter()
            .filter(|r| r.guard.evaluate(&view).unwrap_or(false))
            .map(|r| r.label.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmEdge {
    pub from: StateId,
    pub label: String,
    pub to: StateId,
    pub reward: f64,
}

/// Reward machine over label sets. An edge fires when its label is present;
/// with no firing edge the machine stays put and outputs 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMachine {
    pub state_count: usize,
    pub initial: StateId,
    pub terminal: BTreeSet<StateId>,
    pub edges: Vec<RmEdge>,
}

impl RewardMachine {
    pub fn step(&self, state: StateId, labels: &BTreeSet<String>) -> (f64, StateId) {
        self.edges
            .iter()
            .find(|e| e.from == state && labels.contains(&e.label))
            .map_or((0.0, state), |e| (e.reward, e.to))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStep {
    pub state: Vec<f64>,
    pub reward: f64,
    /// The hidden machine reached a terminal state or the environment ended.
    pub terminal: bool,
    /// The step cap was hit.
    pub truncated: bool,
}

impl TaskStep {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Environment plus hidden machine; exposes only `(state, reward, done)`.
pub struct TaskWrapper {
    env: Box<dyn Env>,
    spec: TaskSpec,
    machine: Srm,
    machine_state: StateId,
    steps: usize,
}

impl TaskWrapper {
    pub fn new(env: Box<dyn Env>, spec: &TaskSpec) -> Result<TaskWrapper, EnvError> {
        if env_family(env.name()) != Some(spec.family.as_str()) {
            return Err(EnvError::Incompatible {
                task: spec.name.clone(),
                env: env.name().to_string(),
            });
        }
        let machine = spec
            .srm(env.variables())
            .map_err(|e| EnvError::Config(e.to_string()))?;
        Ok(TaskWrapper {
            machine_state: machine.initial(),
            env,
            spec: spec.clone(),
            machine,
            steps: 0,
        })
    }

    pub fn variables(&self) -> &[String] {
        self.env.variables()
    }

    pub fn action_count(&self) -> usize {
        self.env.action_count()
    }

    pub fn env(&self) -> &dyn Env {
        self.env.as_ref()
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn max_return(&self) -> f64 {
        self.spec.max_return
    }

    pub fn step_cap(&self) -> usize {
        self.spec.step_cap
    }

    /// The hidden machine; for harness checks and for learners that are
    /// given the machine, never consulted by the wrapper's consumers.
    pub fn hidden_srm(&self) -> &Srm {
        &self.machine
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.machine_state = self.machine.initial();
        self.steps = 0;
        self.env.reset()
    }

    pub fn step(&mut self, action: usize) -> TaskStep {
        let out = self.env.step(action);
        let (reward, next) = self
            .machine
            .step_from(self.machine_state, &out.state)
            .expect("task machines are complete and deterministic");
        self.machine_state = next;
        self.steps += 1;
        TaskStep {
            terminal: out.terminal || self.machine.is_terminal(next),
            truncated: self.steps >= self.spec.step_cap,
            state: out.state,
            reward,
        }
    }

    /// Same task on a fresh environment instance.
    pub fn fresh(&self, seed: u64) -> TaskWrapper {
        TaskWrapper::new(self.env.fresh(seed), &self.spec).expect("same configuration")
    }
}
