//! Helpers shared by the integration suites: scripted office walks and an
//! exhaustive search for the smallest consistent machine.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use srm_core::envs::{make_task, Direction, OfficeLayout};
use srm_core::infer::{Counterexample, CounterexampleSet};
use srm_core::learn::Mlp;
use srm_core::logic::{CmpOp, Formula};
use srm_core::srm::{Srm, Transition};

/// Actions of a shortest path between two cells.
pub fn route(layout: &OfficeLayout, from: (i64, i64), to: (i64, i64)) -> Vec<usize> {
    let mut prev: HashMap<(i64, i64), ((i64, i64), usize)> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        if c == to {
            break;
        }
        for (a, d) in Direction::ALL.iter().enumerate() {
            let n = layout.move_from(c, *d);
            if n != from && !prev.contains_key(&n) {
                prev.insert(n, (c, a));
                queue.push_back(n);
            }
        }
    }
    let mut path = Vec::new();
    let mut c = to;
    while c != from {
        let (p, a) = prev[&c];
        path.push(a);
        c = p;
    }
    path.reverse();
    path
}

/// Walks the discrete office task through the labeled waypoints in order and
/// returns the observed episode; stops early if the task ends.
pub fn office_walk(task: &str, waypoints: &[&str]) -> Counterexample {
    let layout = OfficeLayout::builtin();
    let mut env = make_task("office-discrete", task, 0).unwrap();
    let s0 = env.reset();
    let mut states = vec![s0.clone()];
    let mut rewards = Vec::new();
    let mut at = (s0[0] as i64, s0[1] as i64);
    'outer: for w in waypoints {
        let target = layout.labels[*w];
        for a in route(&layout, at, target) {
            let step = env.step(a);
            states.push(step.state.clone());
            rewards.push(step.reward);
            if step.done() {
                break 'outer;
            }
        }
        at = target;
    }
    Counterexample::new(states, rewards).unwrap()
}

/// Counterexamples on which the post-office task needs three states.
pub fn office_corpus() -> CounterexampleSet {
    [
        office_walk("post_inner_offices", &["E", "F", "A"]),
        office_walk("post_inner_offices", &["F", "E", "A"]),
        office_walk("post_inner_offices", &["E", "A"]),
        office_walk("post_inner_offices", &["B", "A", "E"]),
    ]
    .into_iter()
    .collect()
}

/// Interval guard `lo <= x < hi` on the single variable `x`; infinite ends
/// drop the matching bound.
pub fn interval(lo: f64, hi: f64) -> Formula {
    let mut parts = Vec::new();
    if lo.is_finite() {
        parts.push(Formula::var_cmp("x", CmpOp::Ge, lo));
    }
    if hi.is_finite() {
        parts.push(Formula::var_cmp("x", CmpOp::Lt, hi));
    }
    Formula::And(parts)
}

/// Search over partial machines driven by the data: a transition is fixed the
/// first time a step needs one. A step in state `p` must be explained by a
/// fixed guard of `p` that holds, or by fixing a new guard that holds and
/// overlaps none of `p`'s fixed guards. Mirrors the semantics of the
/// given-guard encoding, without a solver.
pub fn brute_min_states(
    examples: &CounterexampleSet,
    guards: &[(f64, f64)],
    max_states: usize,
) -> Option<usize> {
    let holds = |g: (f64, f64), x: f64| x >= g.0 && x < g.1;
    let overlap = |a: (f64, f64), b: (f64, f64)| a.0.max(b.0) < a.1.min(b.1);
    let steps: Vec<(usize, usize)> = examples
        .items()
        .iter()
        .enumerate()
        .flat_map(|(e, ex)| (0..ex.len()).map(move |t| (e, t)))
        .collect();

    // table[p][i] = Some((target, reward))
    type Table = Vec<Vec<Option<(usize, f64)>>>;

    #[allow(clippy::too_many_arguments)]
    fn search(
        k: usize,
        pos: &mut Vec<usize>,
        table: &mut Table,
        n: usize,
        steps: &[(usize, usize)],
        examples: &CounterexampleSet,
        guards: &[(f64, f64)],
        holds: &dyn Fn((f64, f64), f64) -> bool,
        overlap: &dyn Fn((f64, f64), (f64, f64)) -> bool,
    ) -> bool {
        let Some(&(e, t)) = steps.get(k) else {
            return true;
        };
        if t == 0 {
            pos[e] = 0;
        }
        let ex = &examples.items()[e];
        let x = ex.states()[t + 1][0];
        let r = ex.rewards()[t];
        let p = pos[e];
        let fixed: Vec<usize> = (0..guards.len())
            .filter(|&i| table[p][i].is_some())
            .collect();
        if let Some(&i) = fixed.iter().find(|&&i| holds(guards[i], x)) {
            let (q, out) = table[p][i].unwrap();
            if out != r {
                return false;
            }
            let saved = pos[e];
            pos[e] = q;
            let ok = search(
                k + 1,
                pos,
                table,
                n,
                steps,
                examples,
                guards,
                holds,
                overlap,
            );
            pos[e] = saved;
            return ok;
        }
        for i in 0..guards.len() {
            if table[p][i].is_some()
                || !holds(guards[i], x)
                || fixed.iter().any(|&j| overlap(guards[i], guards[j]))
            {
                continue;
            }
            for q in 0..n {
                table[p][i] = Some((q, r));
                let saved = pos[e];
                pos[e] = q;
                let ok = search(
                    k + 1,
                    pos,
                    table,
                    n,
                    steps,
                    examples,
                    guards,
                    holds,
                    overlap,
                );
                pos[e] = saved;
                table[p][i] = None;
                if ok {
                    return true;
                }
            }
        }
        false
    }

    for n in 1..=max_states {
        let mut table: Table = vec![vec![None; guards.len()]; n];
        let mut pos = vec![0; examples.len()];
        if search(
            0, &mut pos, &mut table, n, &steps, examples, guards, &holds, &overlap,
        ) {
            return Some(n);
        }
    }
    None
}

/// A random small instance: interval guards on `x in [0, 10)`, a planted
/// machine that uses only guards covering the domain from each state, and
/// counterexamples sampled from it.
pub struct Planted {
    pub guards: Vec<(f64, f64)>,
    pub machine: Srm,
    pub examples: CounterexampleSet,
}

pub fn planted_instance(rng: &mut ChaCha8Rng) -> Planted {
    let c1 = rng.gen_range(1..5) as f64;
    let c2 = rng.gen_range(5..9) as f64;
    // either a three-way partition, or a two-way cut plus the full interval
    let (guards, covers): (Vec<(f64, f64)>, Vec<Vec<usize>>) = if rng.gen_bool(0.5) {
        (
            vec![(f64::NEG_INFINITY, c1), (c1, c2), (c2, f64::INFINITY)],
            vec![vec![0, 1, 2]],
        )
    } else {
        (
            vec![
                (f64::NEG_INFINITY, c1),
                (c1, f64::INFINITY),
                (f64::NEG_INFINITY, f64::INFINITY),
            ],
            vec![vec![0, 1], vec![2]],
        )
    };
    let n = rng.gen_range(1..=4);
    let mut transitions = Vec::new();
    for p in 0..n {
        let cover = &covers[rng.gen_range(0..covers.len())];
        for &i in cover {
            let reward = if rng.gen_bool(0.4) {
                rng.gen_range(1..4) as f64
            } else {
                0.0
            };
            transitions.push(Transition {
                from: p,
                guard: interval(guards[i].0, guards[i].1),
                to: rng.gen_range(0..n),
                reward,
            });
        }
    }
    let machine = Srm::new(vec!["x".into()], n, 0, transitions).unwrap();
    let count = rng.gen_range(1..=6);
    let mut examples = CounterexampleSet::new();
    for _ in 0..count {
        let len = rng.gen_range(2..=7);
        let states: Vec<Vec<f64>> = (0..len)
            .map(|_| vec![rng.gen_range(0..20) as f64 * 0.5])
            .collect();
        let rewards = machine.run(&states).unwrap();
        examples.push(Counterexample::new(states, rewards).unwrap());
    }
    Planted {
        guards,
        machine,
        examples,
    }
}

pub fn guard_formulas(guards: &[(f64, f64)]) -> Vec<Formula> {
    guards.iter().map(|g| interval(g.0, g.1)).collect()
}

/// Largest relative error between backprop and central differences,
/// measured on the whole gradient vector.
pub fn gradient_error(net: &Mlp, batch: &[(&[f64], usize, f64)]) -> f64 {
    let (_, grads) = net.loss_and_grads(batch);
    let h = 1e-6;
    let numeric: Vec<f64> = (0..net.param_count())
        .map(|i| {
            let mut up = net.clone();
            up.params_mut()[i] += h;
            let mut down = net.clone();
            down.params_mut()[i] -= h;
            (up.loss(batch) - down.loss(batch)) / (2.0 * h)
        })
        .collect();
    let diff: f64 = grads
        .0
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = grads.0.iter().map(|a| a * a).sum::<f64>().sqrt()
        + numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn random_net_case(rng: &mut ChaCha8Rng) -> (Mlp, Vec<(Vec<f64>, usize, f64)>) {
    let depth = rng.gen_range(1..=3);
    let mut sizes = vec![rng.gen_range(1..6)];
    sizes.extend((0..depth).map(|_| rng.gen_range(2..9)));
    sizes.push(rng.gen_range(1..5));
    let mut net = Mlp::new(&sizes, rng);
    for p in net.params_mut() {
        *p += rng.gen_range(-0.1..0.1);
    }
    let outputs = *sizes.last().unwrap();
    let batch = (0..rng.gen_range(1..6))
        .map(|_| {
            (
                (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                rng.gen_range(0..outputs),
                rng.gen_range(-3.0..3.0),
            )
        })
        .collect();
    (net, batch)
}
