use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    argmax, epsilon_greedy, train_with, Adam, LearnError, Learner, Mlp, Policy, PolicyMemory,
    RewardModel, TrainReport,
};
use crate::envs::TaskWrapper;
use crate::eval::EvalSchedule;
use crate::srm::StateId;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeepHyper {
    pub lr: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub hidden: Vec<usize>,
    pub replay: usize,
    pub batch: usize,
    pub target_sync: u64,
    pub train_every: u64,
    pub learning_starts: u64,
    /// Frames concatenated into the network input.
    pub stack: usize,
    /// Targets beyond this magnitude count as divergence.
    pub max_value: f64,
}

impl Default for DeepHyper {
    fn default() -> Self {
        DeepHyper {
            lr: 5e-4,
            gamma: 0.95,
            epsilon: 0.15,
            hidden: vec![64, 64],
            replay: 50_000,
            batch: 32,
            target_sync: 1_000,
            train_every: 4,
            learning_starts: 1_000,
            stack: 1,
            max_value: 1e6,
        }
    }
}

impl DeepHyper {
    pub fn check(&self) -> Result<(), LearnError> {
        let bad = |m: String| Err(LearnError::Hyper(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.stack == 0
            || self.batch == 0
            || self.replay < self.batch
            || self.train_every == 0
            || self.target_sync == 0
        {
            return bad(
                "stack, batch, replay, train_every and target_sync must be positive".into(),
            );
        }
        Ok(())
    }
}

/// Scales each variable to `[-1, 1]` and concatenates the last `stack`
/// observations, oldest first; an episode starts with `stack` copies of its
/// first observation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Encoder {
    bounds: Vec<(f64, f64)>,
    stack: usize,
}

impl Encoder {
    pub fn new(bounds: Vec<(f64, f64)>, stack: usize) -> Encoder {
        assert!(stack > 0);
        Encoder { bounds, stack }
    }

    pub fn width(&self) -> usize {
        self.bounds.len() * self.stack
    }

    pub fn stack(&self) -> usize {
        self.stack
    }

    fn normalize(&self, s: &[f64]) -> Vec<f64> {
        s.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| {
                if hi > lo {
                    2.0 * (v - lo) / (hi - lo) - 1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn encode(&self, memory: &mut PolicyMemory, s: &[f64]) -> Vec<f64> {
        let frame = self.normalize(s);
        if memory.frames.is_empty() {
            for _ in 0..self.stack - 1 {
                memory.frames.push_back(frame.clone());
            }
        }
        memory.frames.push_back(frame);
        while memory.frames.len() > self.stack {
            memory.frames.pop_front();
        }
        memory.frames.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone)]
struct Sample {
    input: Vec<f64>,
    action: usize,
    next_input: Vec<f64>,
    next_state: Vec<f64>,
    env_reward: f64,
    env_terminal: bool,
    live: StateId,
}

/// One online and one target network per reward-model state, trained from a
/// shared replay buffer. Each sampled transition is relabeled under every
/// model state when targets are built.
#[derive(Debug, Clone)]
pub struct DeepAgent {
    nets: Vec<Mlp>,
    targets: Vec<Mlp>,
    optims: Vec<Adam>,
    replay: Vec<Sample>,
    replay_next: usize,
    encoder: Encoder,
    actions: usize,
    hp: DeepHyper,
    steps: u64,
    train_steps: u64,
    memory: PolicyMemory,
    /// Encoded current observation of the running episode.
    current: Vec<f64>,
}

impl DeepAgent {
    pub fn new(
        model_states: usize,
        actions: usize,
        encoder: Encoder,
        hp: DeepHyper,
        rng: &mut ChaCha8Rng,
    ) -> Result<DeepAgent, LearnError> {
        hp.check()?;
        let mut agent = DeepAgent {
            nets: Vec::new(),
            targets: Vec::new(),
            optims: Vec::new(),
            replay: Vec::new(),
            replay_next: 0,
            encoder,
            actions,
            hp,
            steps: 0,
            train_steps: 0,
            memory: PolicyMemory::default(),
            current: Vec::new(),
        };
        agent.reinitialize(model_states, rng);
        Ok(agent)
    }

    pub fn for_task(
        task: &TaskWrapper,
        model: &dyn RewardModel,
        hp: &DeepHyper,
        rng: &mut ChaCha8Rng,
    ) -> Result<DeepAgent, LearnError> {
        let encoder = Encoder::new(task.env().bounds(), hp.stack);
        DeepAgent::new(
            model.state_count(),
            task.action_count(),
            encoder,
            hp.clone(),
            rng,
        )
    }

    /// Fresh networks (output bias 1, mirroring tables started at 1) and an
    /// empty replay buffer.
    pub fn reinitialize(&mut self, model_states: usize, rng: &mut ChaCha8Rng) {
        let mut sizes = vec![self.encoder.width()];
        sizes.extend(&self.hp.hidden);
        sizes.push(self.actions);
        self.nets = (0..model_states)
            .map(|_| {
                let mut net = Mlp::new(&sizes, rng);
                let n = net.param_count();
                for b in &mut net.params_mut()[n - self.actions..] {
                    *b = 1.0;
                }
                net
            })
            .collect();
        self.targets = self.nets.clone();
        self.optims = self
            .nets
            .iter()
            .map(|n| Adam::new(n.param_count(), self.hp.lr))
            .collect();
        self.replay.clear();
        self.replay_next = 0;
        self.steps = 0;
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn nets(&self) -> &[Mlp] {
        &self.nets
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn select(&self, model_state: StateId, input: &[f64], rng: &mut ChaCha8Rng) -> usize {
        epsilon_greedy(&self.nets[model_state].forward(input), self.hp.epsilon, rng)
    }

    /// Stores a transition and trains on schedule.
    #[allow(clippy::too_many_arguments)]
    pub fn remember(
        &mut self,
        model: &dyn RewardModel,
        input: Vec<f64>,
        action: usize,
        next_input: Vec<f64>,
        next_state: Vec<f64>,
        env_reward: f64,
        env_terminal: bool,
        live: StateId,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), LearnError> {
        let sample = Sample {
            input,
            action,
            next_input,
            next_state,
            env_reward,
            env_terminal,
            live,
        };
        if self.replay.len() < self.hp.replay {
            self.replay.push(sample);
        } else {
            self.replay[self.replay_next] = sample;
        }
        self.replay_next = (self.replay_next + 1) % self.hp.replay;
        self.steps += 1;
        if self.steps >= self.hp.learning_starts
            && self.steps.is_multiple_of(self.hp.train_every)
            && self.replay.len() >= self.hp.batch
        {
            self.train(model, rng)?;
        }
        if self.steps.is_multiple_of(self.hp.target_sync) {
            self.targets = self.nets.clone();
        }
        Ok(())
    }

    fn train(&mut self, model: &dyn RewardModel, rng: &mut ChaCha8Rng) -> Result<(), LearnError> {
        let idx: Vec<usize> = (0..self.hp.batch)
            .map(|_| rng.gen_range(0..self.replay.len()))
            .collect();
        let q = self.nets.len();
        // max target value per (sample, successor state), computed on demand
        let mut next_max: Vec<Vec<Option<f64>>> = vec![vec![None; q]; idx.len()];
        for u in 0..q {
            let mut targets = Vec::with_capacity(idx.len());
            for (k, &i) in idx.iter().enumerate() {
                let smp = &self.replay[i];
                let (r, succ) = model.transition(u, &smp.next_state, smp.env_reward)?;
                let terminal = model.is_terminal(succ) || (u == smp.live && smp.env_terminal);
                let y = if terminal {
                    r
                } else {
                    let m = *next_max[k][succ].get_or_insert_with(|| {
                        self.targets[succ]
                            .forward(&smp.next_input)
                            .into_iter()
                            .fold(f64::NEG_INFINITY, f64::max)
                    });
                    r + self.hp.gamma * m
                };
                if !y.is_finite() || y.abs() > self.hp.max_value {
                    return Err(LearnError::Diverged(format!(
                        "target {y} for model state {u}"
                    )));
                }
                targets.push(y);
            }
            let batch: Vec<(&[f64], usize, f64)> = idx
                .iter()
                .zip(&targets)
                .map(|(&i, &y)| (self.replay[i].input.as_slice(), self.replay[i].action, y))
                .collect();
            let (loss, grads) = self.nets[u].loss_and_grads(&batch);
            if !loss.is_finite() {
                return Err(LearnError::Diverged(format!(
                    "loss {loss} for model state {u}"
                )));
            }
            self.optims[u].step(&mut self.nets[u], &grads);
        }
        self.train_steps += 1;
        Ok(())
    }

    pub fn policy(&self) -> DeepPolicy {
        DeepPolicy {
            nets: self.nets.clone(),
            encoder: self.encoder.clone(),
        }
    }
}

/// Frozen greedy policy over the online networks.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DeepPolicy {
    nets: Vec<Mlp>,
    encoder: Encoder,
}

impl Policy for DeepPolicy {
    fn act(&self, memory: &mut PolicyMemory, model_state: StateId, state: &[f64]) -> usize {
        let x = self.encoder.encode(memory, state);
        argmax(&self.nets[model_state].forward(&x))
    }
}

impl Learner for DeepAgent {
    fn begin_episode(&mut self, s0: &[f64]) {
        self.memory = PolicyMemory::default();
        self.current = self.encoder.encode(&mut self.memory, s0);
    }

    fn act(&mut self, model_state: StateId, _state: &[f64], rng: &mut ChaCha8Rng) -> usize {
        self.select(model_state, &self.current, rng)
    }

    fn exploration(&self) -> f64 {
        self.hp.epsilon
    }

    fn observe(
        &mut self,
        model: &dyn RewardModel,
        _state: &[f64],
        action: usize,
        next: &[f64],
        env_reward: f64,
        env_terminal: bool,
        live: StateId,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, StateId), LearnError> {
        let next_x = self.encoder.encode(&mut self.memory, next);
        let out = model.transition(live, next, env_reward)?;
        let x = std::mem::replace(&mut self.current, next_x.clone());
        self.remember(
            model,
            x,
            action,
            next_x,
            next.to_vec(),
            env_reward,
            env_terminal,
            live,
            rng,
        )?;
        Ok(out)
    }

    fn reinitialize(&mut self, model_states: usize, rng: &mut ChaCha8Rng) {
        DeepAgent::reinitialize(self, model_states, rng)
    }

    fn policy(&self) -> Box<dyn Policy> {
        Box::new(DeepAgent::policy(self))
    }
}

/// Deep counterpart of the tabular trainer.
pub fn train_deep(
    task: &mut TaskWrapper,
    model: &dyn RewardModel,
    hp: &DeepHyper,
    schedule: &EvalSchedule,
    total_steps: u64,
    seed: u64,
) -> Result<(DeepAgent, TrainReport), LearnError> {
    let mut rng = crate::seeded(seed, crate::Stream::Agent);
    let mut eval_rng = crate::seeded(seed, crate::Stream::Eval);
    let mut agent = DeepAgent::for_task(task, model, hp, &mut rng)?;
    let report = train_with(
        task,
        model,
        &mut agent,
        schedule,
        total_steps,
        &mut rng,
        &mut eval_rng,
        &mut |_, _| {},
    )?;
    Ok((agent, report))
}
