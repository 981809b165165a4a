use rand_chacha::ChaCha8Rng;

use super::{
    argmax, epsilon_greedy, train_with, value_bound, EpisodeLog, Hyper, LearnError, Learner,
    LearningRate, Policy, PolicyMemory, RewardModel, TrainReport,
};
use crate::envs::{GridIndex, TaskWrapper};
use crate::eval::EvalSchedule;
use crate::srm::StateId;

/// Dense `(state, action)` table; unseen pairs hold 1.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QTable {
    actions: usize,
    values: Vec<f64>,
    visits: Vec<u32>,
}

impl QTable {
    pub fn new(states: usize, actions: usize) -> QTable {
        QTable {
            actions,
            values: vec![1.0; states * actions],
            visits: vec![0; states * actions],
        }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.actions + a] = v;
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn visit(&mut self, s: usize, a: usize) -> u32 {
        let v = &mut self.visits[s * self.actions + a];
        *v += 1;
        *v
    }
}

/// One Q-table per reward-model state, updated together on every step.
#[derive(Debug, Clone)]
pub struct TabularAgent {
    tables: Vec<QTable>,
    grid: GridIndex,
    actions: usize,
    hp: Hyper,
    bound: f64,
    updates: u64,
}

impl TabularAgent {
    pub fn new(
        model_states: usize,
        grid: GridIndex,
        actions: usize,
        hp: Hyper,
        r_max: f64,
    ) -> Result<TabularAgent, LearnError> {
        hp.check()?;
        Ok(TabularAgent {
            tables: (0..model_states)
                .map(|_| QTable::new(grid.size(), actions))
                .collect(),
            grid,
            actions,
            bound: value_bound(r_max, hp.gamma),
            hp,
            updates: 0,
        })
    }

    pub fn for_task(
        task: &TaskWrapper,
        model: &dyn RewardModel,
        hp: &Hyper,
    ) -> Result<TabularAgent, LearnError> {
        let grid = task
            .env()
            .grid()
            .ok_or_else(|| LearnError::NotTabular(task.env().name().to_string()))?;
        let r_max = task
            .spec()
            .stages
            .iter()
            .map(|s| s.reward)
            .fold(0.0, f64::max);
        TabularAgent::new(
            model.state_count(),
            grid,
            task.action_count(),
            hp.clone(),
            r_max,
        )
    }

    pub fn tables(&self) -> &[QTable] {
        &self.tables
    }

    /// Number of single-table updates applied so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hp
    }

    fn index(&self, s: &[f64]) -> usize {
        self.grid.index(s).expect("state lies on the grid")
    }

    pub fn select(&self, model_state: StateId, s: &[f64], rng: &mut ChaCha8Rng) -> usize {
        epsilon_greedy(
            self.tables[model_state].row(self.index(s)),
            self.hp.epsilon,
            rng,
        )
    }

    /// Applies the update for every model state `u` (in index order) using
    /// the reward and successor the model gives for `u` on `next`; returns
    /// the live state's `(reward, successor)`.
    #[allow(clippy::too_many_arguments)]
    pub fn update_all(
        &mut self,
        model: &dyn RewardModel,
        s: &[f64],
        action: usize,
        next: &[f64],
        env_reward: f64,
        live: StateId,
        env_terminal: bool,
    ) -> Result<(f64, StateId), LearnError> {
        let (si, ni) = (self.index(s), self.index(next));
        let mut live_out = None;
        for u in 0..self.tables.len() {
            let (r, succ) = model.transition(u, next, env_reward)?;
            if u == live {
                live_out = Some((r, succ));
            }
            let terminal = model.is_terminal(succ) || (u == live && env_terminal);
            let target = if terminal {
                r
            } else {
                r + self.hp.gamma * self.tables[succ].max(ni)
            };
            let alpha = match self.hp.alpha {
                LearningRate::Constant(a) => a,
                LearningRate::Harmonic(a) => a / self.tables[u].visit(si, action) as f64,
            };
            let old = self.tables[u].get(si, action);
            let new = old + alpha * (target - old);
            debug_assert!(
                new <= self.bound + 1e-9,
                "value {new} above bound {}",
                self.bound
            );
            self.tables[u].set(si, action, new);
            self.updates += 1;
        }
        Ok(live_out.expect("live state is a model state"))
    }

    pub fn policy(&self) -> TabularPolicy {
        TabularPolicy {
            tables: self.tables.clone(),
            grid: self.grid,
        }
    }

    /// Fresh tables for a model with `model_states` states.
    pub fn reinitialize(&mut self, model_states: usize) {
        self.tables = (0..model_states)
            .map(|_| QTable::new(self.grid.size(), self.actions))
            .collect();
    }
}

/// Frozen greedy policy `argmax_a q_u(s, a)`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TabularPolicy {
    tables: Vec<QTable>,
    grid: GridIndex,
}

impl Policy for TabularPolicy {
    fn act(&self, _memory: &mut PolicyMemory, model_state: StateId, state: &[f64]) -> usize {
        argmax(
            self.tables[model_state].row(self.grid.index(state).expect("state lies on the grid")),
        )
    }
}

/// Runs the tabular learner for `total_steps` environment steps, evaluating
/// the greedy policy on the schedule. `on_episode` sees the agent after
/// every finished episode.
pub fn train_tabular(
    task: &mut TaskWrapper,
    model: &dyn RewardModel,
    hp: &Hyper,
    schedule: &EvalSchedule,
    total_steps: u64,
    seed: u64,
    on_episode: &mut dyn FnMut(&TabularAgent, &EpisodeLog),
) -> Result<(TabularAgent, TrainReport), LearnError> {
    let mut agent = TabularAgent::for_task(task, model, hp)?;
    let mut rng = crate::seeded(seed, crate::Stream::Agent);
    let mut eval_rng = crate::seeded(seed, crate::Stream::Eval);
    let report = train_with(
        task,
        model,
        &mut agent,
        schedule,
        total_steps,
        &mut rng,
        &mut eval_rng,
        on_episode,
    )?;
    Ok((agent, report))
}

impl Learner for TabularAgent {
    fn begin_episode(&mut self, _s0: &[f64]) {}

    fn act(&mut self, model_state: StateId, state: &[f64], rng: &mut ChaCha8Rng) -> usize {
        self.select(model_state, state, rng)
    }

    fn exploration(&self) -> f64 {
        self.hp.epsilon
    }

    fn observe(
        &mut self,
        model: &dyn RewardModel,
        state: &[f64],
        action: usize,
        next: &[f64],
        env_reward: f64,
        env_terminal: bool,
        live: StateId,
        _rng: &mut ChaCha8Rng,
    ) -> Result<(f64, StateId), LearnError> {
        self.update_all(model, state, action, next, env_reward, live, env_terminal)
    }

    fn reinitialize(&mut self, model_states: usize, _rng: &mut ChaCha8Rng) {
        TabularAgent::reinitialize(self, model_states)
    }

    fn policy(&self) -> Box<dyn Policy> {
        Box::new(TabularAgent::policy(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_task;
    use crate::learn::PassThrough;
    use crate::srm::Srm;

    #[test]
    fn basic_machine_equals_pass_through_while_rewards_are_zero() {
        let basic = Srm::basic(vec!["x".to_string(), "y".to_string()]);
        let hp = Hyper::default();
        let mut t1 = make_task("office-discrete", "post_inner_offices", 0).unwrap();
        let mut t2 = make_task("office-discrete", "post_inner_offices", 0).unwrap();
        let mut a1 = TabularAgent::for_task(&t1, &basic, &hp).unwrap();
        let mut a2 = TabularAgent::for_task(&t2, &PassThrough, &hp).unwrap();
        let mut rng1 = crate::seeded(1, crate::Stream::Agent);
        let mut rng2 = crate::seeded(1, crate::Stream::Agent);
        let (mut s1, mut s2) = (t1.reset(), t2.reset());
        for _ in 0..400 {
            let x1 = a1.select(0, &s1, &mut rng1);
            let x2 = a2.select(0, &s2, &mut rng2);
            assert_eq!(x1, x2);
            let o1 = t1.step(x1);
            let o2 = t2.step(x2);
            if o1.reward != 0.0 {
                break;
            }
            a1.update_all(&basic, &s1, x1, &o1.state, o1.reward, 0, false)
                .unwrap();
            a2.update_all(&PassThrough, &s2, x2, &o2.state, o2.reward, 0, false)
                .unwrap();
            s1 = o1.state;
            s2 = o2.state;
        }
        assert_eq!(a1.tables(), a2.tables());
    }

    #[test]
    fn multi_update_touches_every_table() {
        let t = make_task("office-discrete", "post_inner_offices", 0).unwrap();
        let srm = t.hidden_srm().clone();
        let mut a = TabularAgent::for_task(&t, &srm, &Hyper::default()).unwrap();
        a.update_all(&srm, &[7.0, 0.0], 0, &[7.0, 1.0], 0.0, 0, false)
            .unwrap();
        assert_eq!(a.updates(), srm.state_count() as u64);
        for table in a.tables() {
            assert_ne!(table.get(7, 0), 1.0);
        }
    }

    #[test]
    fn zero_discount_learns_immediate_rewards_only() {
        let t = make_task("office-discrete", "post_inner_offices", 0).unwrap();
        let hp = Hyper {
            alpha: LearningRate::Constant(0.5),
            gamma: 1e-12,
            epsilon: 0.0,
        };
        let mut a = TabularAgent::for_task(&t, &PassThrough, &hp).unwrap();
        for _ in 0..60 {
            a.update_all(&PassThrough, &[4.0, 5.0], 2, &[3.0, 5.0], 1.0, 0, false)
                .unwrap();
            a.update_all(&PassThrough, &[4.0, 5.0], 3, &[5.0, 5.0], 0.0, 0, false)
                .unwrap();
        }
        let row = a.tables()[0].row(4 + 15 * 5);
        assert!((row[2] - 1.0).abs() < 1e-9 && row[3].abs() < 1e-9);
    }
}
