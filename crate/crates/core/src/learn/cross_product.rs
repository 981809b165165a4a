//! Differential check of the multi-table learner against Q-learning on the
//! explicit product of grid cells and machine states.

use super::{Hyper, LearnError, LearningRate, TabularAgent};
use crate::envs::TaskWrapper;
use crate::logic::StateView;
use crate::srm::Srm;

#[derive(Debug, Clone, PartialEq)]
pub struct CrossProductReport {
    pub steps: u64,
    /// Largest entrywise gap between the learner and the product table.
    pub max_abs_diff: f64,
    /// Same gap for a product table updated only at the live machine state.
    /// Positive whenever the learner's extra updates did any work.
    pub control_diff: f64,
}

/// Reward and successor as Iverson sums over the outgoing guards:
/// `sum_t [guard_t(s)] * reward_t` and `sum_t [guard_t(s)] * to_t`. Equal to
/// the fired transition exactly when the machine is deterministic and
/// complete at `s`.
fn iverson_step(srm: &Srm, u: usize, s: &[f64]) -> Result<(f64, usize), LearnError> {
    let view = StateView::new(srm.variables(), s);
    let (mut r, mut to) = (0.0, 0usize);
    for &i in srm.outgoing(u) {
        let t = &srm.transitions()[i];
        let hit = t
            .guard
            .evaluate(&view)
            .map_err(crate::srm::SrmError::from)? as usize;
        r += hit as f64 * t.reward;
        to += hit * t.to;
    }
    Ok((r, to))
}

struct ProductTable {
    cells: usize,
    actions: usize,
    values: Vec<f64>,
}

impl ProductTable {
    fn new(cells: usize, states: usize, actions: usize) -> ProductTable {
        ProductTable {
            cells,
            actions,
            values: vec![1.0; cells * states * actions],
        }
    }

    fn at(&self, u: usize, s: usize, a: usize) -> usize {
        (u * self.cells + s) * self.actions + a
    }

    fn max(&self, u: usize, s: usize) -> f64 {
        let i = self.at(u, s, 0);
        self.values[i..i + self.actions]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[allow(clippy::too_many_arguments)]
    fn update(
        &mut self,
        srm: &Srm,
        u: usize,
        si: usize,
        a: usize,
        ni: usize,
        next: &[f64],
        alpha: f64,
        gamma: f64,
    ) -> Result<(), LearnError> {
        let (r, to) = iverson_step(srm, u, next)?;
        let target = if srm.is_terminal(to) {
            r
        } else {
            r + gamma * self.max(to, ni)
        };
        let k = self.at(u, si, a);
        self.values[k] += alpha * (target - self.values[k]);
        Ok(())
    }
}

/// Trains the multi-table learner on `task` with `srm` for `steps` steps and
/// replays every `(s, a, s')` it sees onto a product table. Episodes end only
/// on machine terminal states or the step cap here, so both sides agree on
/// which targets bootstrap.
pub fn cross_product_check(
    task: &mut TaskWrapper,
    srm: &Srm,
    hp: &Hyper,
    steps: u64,
    seed: u64,
) -> Result<CrossProductReport, LearnError> {
    let alpha = match hp.alpha {
        LearningRate::Constant(a) => a,
        LearningRate::Harmonic(_) => {
            return Err(LearnError::Hyper(
                "the product replay needs a constant step size".into(),
            ))
        }
    };
    let mut agent = TabularAgent::for_task(task, srm, hp)?;
    let grid = task
        .env()
        .grid()
        .ok_or_else(|| LearnError::NotTabular(task.env().name().to_string()))?;
    let (q, actions) = (srm.state_count(), task.action_count());
    let mut product = ProductTable::new(grid.size(), q, actions);
    let mut control = ProductTable::new(grid.size(), q, actions);
    let mut rng = crate::seeded(seed, crate::Stream::Agent);
    let mut done = 0;
    while done < steps {
        let mut s = task.reset();
        let mut u = srm.initial();
        loop {
            let a = agent.select(u, &s, &mut rng);
            let step = task.step(a);
            let (si, ni) = (
                grid.index(&s).expect("grid state"),
                grid.index(&step.state).expect("grid state"),
            );
            let (_, next_u) = agent.update_all(srm, &s, a, &step.state, 0.0, u, false)?;
            for w in 0..q {
                product.update(srm, w, si, a, ni, &step.state, alpha, hp.gamma)?;
            }
            control.update(srm, u, si, a, ni, &step.state, alpha, hp.gamma)?;
            done += 1;
            s = step.state;
            u = next_u;
            if srm.is_terminal(u) || step.truncated || done >= steps {
                break;
            }
        }
    }
    let flat: Vec<f64> = agent
        .tables()
        .iter()
        .flat_map(|t| t.values().iter().copied())
        .collect();
    let gap = |p: &ProductTable| {
        flat.iter()
            .zip(&p.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    Ok(CrossProductReport {
        steps: done,
        max_abs_diff: gap(&product),
        control_diff: gap(&control),
    })
}
