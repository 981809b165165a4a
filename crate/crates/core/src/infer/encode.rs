use std::collections::HashMap;

use super::{complete_srm, CounterexampleSet, InferError};
use crate::logic::{BoxTemplate, Formula, StateView};
use crate::smt::{conjunction_sat, Model, SatResult, SmtError, SolverConfig, SolverSession, Sort};
use crate::srm::{Domain, Srm, Transition};

/// Which given guards can hold together somewhere in the domain; fixed by the
/// guard set, so computed once per inference job.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardOverlaps {
    overlap: Vec<Vec<bool>>,
}

impl GuardOverlaps {
    pub fn compute(
        guards: &[Formula],
        domain: &Domain,
        solver: &SolverConfig,
    ) -> Result<GuardOverlaps, InferError> {
        let k = guards.len();
        let mut overlap = vec![vec![false; k]; k];
        for i in 0..k {
            for j in i..k {
                let fs = [
                    domain.constraint.clone(),
                    guards[i].clone(),
                    guards[j].clone(),
                ];
                let sat = match conjunction_sat(&fs, solver)? {
                    SatResult::Sat(_) => true,
                    SatResult::Unsat => false,
                    // undecided pairs are treated as overlapping, which only
                    // forbids machines
                    SatResult::Unknown => true,
                };
                overlap[i][j] = sat;
                overlap[j][i] = sat;
            }
        }
        Ok(GuardOverlaps { overlap })
    }

    pub fn overlaps(&self, i: usize, j: usize) -> bool {
        self.overlap[i][j]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Given(Vec<Formula>),
    Templates(Thresholds),
}

/// Order encoding of box bounds. A bound only matters through which observed
/// coordinates it separates, so template `(p, i)` gets one literal per
/// variable `v` and distinct observed value `values[v][j]`:
/// `l` for `lo <= values[v][j]` and `u` for `values[v][j] < hi`. Along the
/// sorted values `l` is upward closed and `u` downward closed.
#[derive(Debug, Clone, PartialEq)]
struct Thresholds {
    states: usize,
    formulas: usize,
    /// Sorted distinct coordinates per variable, over every state a guard is
    /// evaluated on.
    values: Vec<Vec<f64>>,
    /// `points[e][t]`: the state the guards see at step `t` of example `e`.
    points: Vec<Vec<Vec<f64>>>,
}

impl Thresholds {
    fn polarity(p: usize, i: usize) -> String {
        format!("pos_{p}_{i}")
    }

    fn lower(p: usize, i: usize, v: usize, j: usize) -> String {
        format!("l_{p}_{i}_{v}_{j}")
    }

    fn upper(p: usize, i: usize, v: usize, j: usize) -> String {
        format!("u_{p}_{i}_{v}_{j}")
    }

    fn index(&self, v: usize, x: f64) -> usize {
        self.values[v]
            .binary_search_by(|y| y.total_cmp(&x))
            .expect("observed coordinate")
    }

    /// Concrete bounds realizing the literal assignment: each bound sits on an
    /// observed value, or just above all of them when no literal flips.
    fn bounds(
        &self,
        model: &Model,
        p: usize,
        i: usize,
        v: usize,
    ) -> Result<(f64, f64), InferError> {
        let values = &self.values[v];
        let beyond = values.last().map_or(0.0, |&x| next_up(x));
        let mut lo = None;
        let mut hi = None;
        for (j, &x) in values.iter().enumerate() {
            if lo.is_none() && lookup(model, &Self::lower(p, i, v, j))? {
                lo = Some(x);
            }
            if hi.is_none() && !lookup(model, &Self::upper(p, i, v, j))? {
                hi = Some(x);
            }
        }
        Ok((lo.unwrap_or(beyond), hi.unwrap_or(beyond)))
    }

    /// Smallest observed value of `v` above `x`, or the next double.
    fn above(&self, v: usize, x: f64) -> f64 {
        let column = &self.values[v];
        let j = column.partition_point(|y| *y <= x);
        column.get(j).copied().unwrap_or_else(|| next_up(x))
    }

    /// Shrinks a positive box to the points state `p` actually evaluates
    /// inside it: lower bounds at their smallest coordinate, upper bounds at
    /// the next observed coordinate past their largest. No evaluated point
    /// changes side, so every guard keeps its value on the corpus. A box
    /// holding no evaluated point becomes empty.
    fn tighten(&self, evaluated: &[&[f64]], bounds: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let inside: Vec<&[f64]> = evaluated
            .iter()
            .copied()
            .filter(|x| x.iter().zip(bounds).all(|(x, (lo, hi))| x >= lo && x < hi))
            .collect();
        if inside.is_empty() {
            return vec![(0.0, 0.0); bounds.len()];
        }
        (0..bounds.len())
            .map(|v| {
                let lo = inside.iter().map(|x| x[v]).fold(f64::INFINITY, f64::min);
                let hi = inside
                    .iter()
                    .map(|x| x[v])
                    .fold(f64::NEG_INFINITY, f64::max);
                (lo, self.above(v, hi))
            })
            .collect()
    }
}

fn lookup(model: &Model, name: &str) -> Result<bool, InferError> {
    model
        .bool(name)
        .ok_or_else(|| InferError::MissingSymbol(name.to_string()))
}

/// A complete constraint problem: declarations, boolean macros and
/// assertions, in the order they are sent to the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub states: usize,
    pub declarations: Vec<(String, Sort)>,
    pub definitions: Vec<(String, Formula)>,
    pub assertions: Vec<Formula>,
    /// Distinct observed rewards; outputs pick at most one of them.
    pub rewards: Vec<f64>,
    shape: Shape,
}

impl Encoding {
    /// Every symbol is boolean: guard values at observed states, bound
    /// thresholds and reward choices are all finite.
    pub const LOGIC: &'static str = "QF_UF";

    pub fn load(&self, session: &mut SolverSession) -> Result<(), SmtError> {
        for (name, sort) in &self.declarations {
            session.declare(name, *sort)?;
        }
        for (name, body) in &self.definitions {
            session.define_bool(name, body)?;
        }
        for a in &self.assertions {
            session.assert_formula(a)?;
        }
        Ok(())
    }

    /// Guards available per state: the given set, or the per-state templates.
    pub fn formulas_per_state(&self) -> usize {
        match &self.shape {
            Shape::Given(g) => g.len(),
            Shape::Templates(t) => t.formulas,
        }
    }

    pub fn transition_symbol(p: usize, i: usize, q: usize) -> String {
        format!("d_{p}_{i}_{q}")
    }

    /// Guard `i` of state `p` emits the `k`-th observed reward.
    pub fn output_symbol(p: usize, i: usize, k: usize) -> String {
        format!("o_{p}_{i}_{k}")
    }

    fn reward_is(&self, p: usize, i: usize, r: f64) -> Formula {
        let k = self
            .rewards
            .iter()
            .position(|x| x.to_bits() == r.to_bits())
            .expect("observed reward");
        var(Encoding::output_symbol(p, i, k))
    }

    pub fn position_symbol(e: usize, t: usize, p: usize) -> String {
        format!("x_{e}_{t}_{p}")
    }
}

fn var(name: String) -> Formula {
    Formula::BoolVar(name)
}

fn and(mut parts: Vec<Formula>) -> Formula {
    if parts.len() == 1 {
        parts.pop().expect("one part")
    } else {
        Formula::And(parts)
    }
}

fn or(mut parts: Vec<Formula>) -> Formula {
    if parts.len() == 1 {
        parts.pop().expect("one part")
    } else {
        Formula::Or(parts)
    }
}

fn implies(a: Formula, b: Formula) -> Formula {
    Formula::Or(vec![Formula::not(a), b])
}

/// Declarations shared by both modes and the per-timestep state constraints:
/// every episode starts in state 0 and sits in exactly one state per step.
fn skeleton(examples: &CounterexampleSet, n: usize, k: usize, enc: &mut Encoding) {
    for p in 0..n {
        for i in 0..k {
            for q in 0..n {
                enc.declarations
                    .push((Encoding::transition_symbol(p, i, q), Sort::Bool));
            }
        }
    }
    let mut rewards: Vec<f64> = examples
        .items()
        .iter()
        .flat_map(|ex| ex.rewards().iter().copied())
        .collect();
    rewards.sort_by(f64::total_cmp);
    rewards.dedup_by(|a, b| a.to_bits() == b.to_bits());
    for p in 0..n {
        for i in 0..k {
            for r in 0..rewards.len() {
                enc.declarations
                    .push((Encoding::output_symbol(p, i, r), Sort::Bool));
                for r2 in 0..r {
                    enc.assertions.push(Formula::not(Formula::And(vec![
                        var(Encoding::output_symbol(p, i, r2)),
                        var(Encoding::output_symbol(p, i, r)),
                    ])));
                }
            }
        }
    }
    enc.rewards = rewards;
    for (e, ex) in examples.items().iter().enumerate() {
        for t in 0..ex.states().len() {
            for p in 0..n {
                enc.declarations
                    .push((Encoding::position_symbol(e, t, p), Sort::Bool));
            }
        }
    }
    for (e, ex) in examples.items().iter().enumerate() {
        enc.assertions.push(var(Encoding::position_symbol(e, 0, 0)));
        for t in 0..ex.states().len() {
            let xs: Vec<Formula> = (0..n)
                .map(|p| var(Encoding::position_symbol(e, t, p)))
                .collect();
            enc.assertions.push(or(xs.clone()));
            for p in 0..n {
                for q in p + 1..n {
                    enc.assertions.push(Formula::not(Formula::And(vec![
                        xs[p].clone(),
                        xs[q].clone(),
                    ])));
                }
            }
        }
    }
}

/// Given-guard encoding. Guard satisfaction by each observed state is a
/// constant, and so is guard overlap, so both are folded in before sending.
pub fn encode_gf(
    examples: &CounterexampleSet,
    n: usize,
    guards: &[Formula],
    overlaps: &GuardOverlaps,
    signature: &[String],
) -> Encoding {
    let k = guards.len();
    let mut enc = Encoding {
        states: n,
        declarations: Vec::new(),
        definitions: Vec::new(),
        assertions: Vec::new(),
        rewards: Vec::new(),
        shape: Shape::Given(guards.to_vec()),
    };
    skeleton(examples, n, k, &mut enc);
    let d = |p, i, q| var(Encoding::transition_symbol(p, i, q));
    // a guard has one target; overlapping guards are not both used
    for p in 0..n {
        for i in 0..k {
            for j in i..k {
                if !overlaps.overlaps(i, j) {
                    continue;
                }
                for q1 in 0..n {
                    for q2 in 0..n {
                        if i == j && q2 <= q1 {
                            continue;
                        }
                        enc.assertions
                            .push(Formula::not(Formula::And(vec![d(p, i, q1), d(p, j, q2)])));
                    }
                }
            }
        }
    }
    for (e, ex) in examples.items().iter().enumerate() {
        for t in 0..ex.len() {
            let next = &ex.states()[t + 1];
            let r = ex.rewards()[t];
            let view = StateView::new(signature, next);
            // a guard that cannot be evaluated on the state never holds there
            let holds: Vec<usize> = (0..k)
                .filter(|&i| guards[i].evaluate(&view).unwrap_or(false))
                .collect();
            for p in 0..n {
                let here = var(Encoding::position_symbol(e, t, p));
                // a transition taken here moves to its target and emits r
                for &i in &holds {
                    for q in 0..n {
                        enc.assertions.push(implies(
                            Formula::And(vec![here.clone(), d(p, i, q)]),
                            Formula::And(vec![
                                var(Encoding::position_symbol(e, t + 1, q)),
                                enc.reward_is(p, i, r),
                            ]),
                        ));
                    }
                }
                // and some transition is taken
                let fired: Vec<Formula> = holds
                    .iter()
                    .flat_map(|&i| (0..n).map(move |q| (i, q)))
                    .map(|(i, q)| d(p, i, q))
                    .collect();
                enc.assertions.push(implies(here, or(fired)));
            }
        }
    }
    enc
}

/// Template encoding: state `p` owns `f` box templates and guard `i` of `p`
/// holds where template `i` holds and every other template of `p` fails.
/// Guards of one state are disjoint by construction, so determinism only
/// asks for a single target per guard. Template values at each observed
/// state are introduced as macros over the bound literals.
pub fn encode_ft(
    examples: &CounterexampleSet,
    n: usize,
    f: usize,
    signature: &[String],
) -> Encoding {
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); signature.len()];
    for ex in examples.items() {
        for state in &ex.states()[1..] {
            for (v, &x) in state.iter().enumerate() {
                values[v].push(x);
            }
        }
    }
    for column in &mut values {
        column.sort_by(f64::total_cmp);
        column.dedup_by(|a, b| a.to_bits() == b.to_bits());
    }
    let points = examples
        .items()
        .iter()
        .map(|ex| ex.states()[1..].to_vec())
        .collect();
    let order = Thresholds {
        states: n,
        formulas: f,
        values,
        points,
    };
    let mut enc = Encoding {
        states: n,
        declarations: Vec::new(),
        definitions: Vec::new(),
        assertions: Vec::new(),
        rewards: Vec::new(),
        shape: Shape::Templates(order.clone()),
    };
    skeleton(examples, n, f, &mut enc);
    for p in 0..n {
        for i in 0..f {
            enc.declarations
                .push((Thresholds::polarity(p, i), Sort::Bool));
            for (v, column) in order.values.iter().enumerate() {
                for j in 0..column.len() {
                    enc.declarations
                        .push((Thresholds::lower(p, i, v, j), Sort::Bool));
                    enc.declarations
                        .push((Thresholds::upper(p, i, v, j), Sort::Bool));
                }
                for j in 1..column.len() {
                    enc.assertions.push(implies(
                        var(Thresholds::lower(p, i, v, j - 1)),
                        var(Thresholds::lower(p, i, v, j)),
                    ));
                    enc.assertions.push(implies(
                        var(Thresholds::upper(p, i, v, j)),
                        var(Thresholds::upper(p, i, v, j - 1)),
                    ));
                }
            }
        }
    }
    let d = |p, i, q| var(Encoding::transition_symbol(p, i, q));
    for p in 0..n {
        for i in 0..f {
            for q1 in 0..n {
                for q2 in q1 + 1..n {
                    enc.assertions
                        .push(Formula::not(Formula::And(vec![d(p, i, q1), d(p, i, q2)])));
                }
            }
        }
    }
    // guard macros per distinct observed state
    let mut point_ids: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut guard_name = |state: &[f64], enc: &mut Encoding| -> usize {
        let key: Vec<u64> = state.iter().map(|v| v.to_bits()).collect();
        if let Some(&id) = point_ids.get(&key) {
            return id;
        }
        let id = point_ids.len();
        point_ids.insert(key, id);
        let at: Vec<usize> = state
            .iter()
            .enumerate()
            .map(|(v, &x)| order.index(v, x))
            .collect();
        for p in 0..n {
            for i in 0..f {
                let inside = and(at
                    .iter()
                    .enumerate()
                    .flat_map(|(v, &j)| {
                        [
                            var(Thresholds::lower(p, i, v, j)),
                            var(Thresholds::upper(p, i, v, j)),
                        ]
                    })
                    .collect());
                enc.definitions.push((
                    format!("h_{id}_{p}_{i}"),
                    Formula::iff(var(Thresholds::polarity(p, i)), inside),
                ));
            }
            for i in 0..f {
                let mut parts = vec![var(format!("h_{id}_{p}_{i}"))];
                parts.extend(
                    (0..f)
                        .filter(|&j| j != i)
                        .map(|j| Formula::not(var(format!("h_{id}_{p}_{j}")))),
                );
                enc.definitions
                    .push((format!("g_{id}_{p}_{i}"), and(parts)));
            }
        }
        id
    };
    for (e, ex) in examples.items().iter().enumerate() {
        for t in 0..ex.len() {
            let id = guard_name(&ex.states()[t + 1], &mut enc);
            let r = ex.rewards()[t];
            for p in 0..n {
                let here = var(Encoding::position_symbol(e, t, p));
                let mut fired = Vec::with_capacity(f);
                for i in 0..f {
                    let g = var(format!("g_{id}_{p}_{i}"));
                    let moves: Vec<Formula> = (0..n)
                        .map(|q| implies(d(p, i, q), var(Encoding::position_symbol(e, t + 1, q))))
                        .collect();
                    let mut then = moves;
                    then.push(enc.reward_is(p, i, r));
                    enc.assertions.push(implies(
                        Formula::And(vec![here.clone(), g.clone()]),
                        Formula::And(then),
                    ));
                    fired.push(Formula::And(vec![
                        g,
                        or((0..n).map(|q| d(p, i, q)).collect()),
                    ]));
                }
                enc.assertions.push(implies(here, or(fired)));
            }
        }
    }
    enc
}

fn next_up(f: f64) -> f64 {
    if f.is_nan() || f == f64::INFINITY {
        return f;
    }
    if f == 0.0 {
        return f64::from_bits(1);
    }
    let bits = f.to_bits();
    f64::from_bits(if f > 0.0 { bits + 1 } else { bits - 1 })
}

/// Reads the machine off a satisfying model: a transition for every true
/// `d` symbol, with the matching output, then completed over `domain`.
pub fn extract_srm(
    model: &Model,
    encoding: &Encoding,
    signature: &[String],
    domain: &Domain,
    solver: &SolverConfig,
) -> Result<Srm, InferError> {
    let n = encoding.states;
    let guards: Vec<Vec<Formula>> = match &encoding.shape {
        Shape::Given(g) => vec![g.clone(); n],
        Shape::Templates(order) => {
            let mut evaluated: Vec<Vec<&[f64]>> = vec![Vec::new(); n];
            for (e, steps) in order.points.iter().enumerate() {
                for (t, x) in steps.iter().enumerate() {
                    let at = (0..n)
                        .find(|&p| model.bool(&Encoding::position_symbol(e, t, p)) == Some(true));
                    let p = at.ok_or_else(|| {
                        InferError::MissingSymbol(Encoding::position_symbol(e, t, 0))
                    })?;
                    evaluated[p].push(x.as_slice());
                }
            }
            let mut out = Vec::with_capacity(n);
            for (p, points) in evaluated.iter().enumerate() {
                let mut concrete = Vec::with_capacity(order.formulas);
                for i in 0..order.formulas {
                    let pos = lookup(model, &Thresholds::polarity(p, i))?;
                    let mut bounds = (0..signature.len())
                        .map(|v| order.bounds(model, p, i, v))
                        .collect::<Result<Vec<_>, _>>()?;
                    if pos {
                        bounds = order.tighten(points, &bounds);
                    }
                    let named = signature
                        .iter()
                        .cloned()
                        .zip(bounds)
                        .map(|(v, (lo, hi))| (v, lo, hi))
                        .collect();
                    concrete.push(BoxTemplate::concrete(pos, named).to_formula());
                }
                out.push(
                    (0..concrete.len())
                        .map(|i| crate::logic::exclusive_guard(&concrete, i))
                        .collect(),
                );
            }
            out
        }
    };
    let mut transitions = Vec::new();
    for (p, row) in guards.iter().enumerate() {
        for (i, g) in row.iter().enumerate() {
            for q in 0..n {
                let name = Encoding::transition_symbol(p, i, q);
                if model.bool(&name).ok_or(InferError::MissingSymbol(name))? {
                    // an unconstrained output defaults to 0
                    let chosen = (0..encoding.rewards.len())
                        .find(|&k| model.bool(&Encoding::output_symbol(p, i, k)) == Some(true));
                    let reward = chosen.map_or(0.0, |k| encoding.rewards[k]);
                    transitions.push(Transition {
                        from: p,
                        guard: g.clone(),
                        to: q,
                        reward,
                    });
                }
            }
        }
    }
    let raw = Srm::new(signature.to_vec(), n, 0, transitions)?;
    complete_srm(&raw, domain, solver)
}
