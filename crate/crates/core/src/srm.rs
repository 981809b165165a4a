//! Symbolic reward machines: finite automata whose transitions carry LRA
//! guards over the raw environment state and emit a real reward.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::logic::{parse_formula_in, print_formula, Formula, LogicError, StateView};
use crate::smt::{conjunction_sat, SatResult, SmtError, SolverConfig};

pub type StateId = usize;

#[derive(Debug, thiserror::Error)]
pub enum SrmError {
    #[error("no guard of state {state} holds for input {input:?}")]
    Incomplete { state: StateId, input: Vec<f64> },
    #[error("guards {first} and {second} of state {state} both hold for input {input:?}")]
    Nondeterministic {
        state: StateId,
        first: usize,
        second: usize,
        input: Vec<f64>,
    },
    #[error("state {0} does not exist")]
    UnknownState(StateId),
    #[error("input has {got} components, signature has {expected}")]
    Arity { expected: usize, got: usize },
    #[error("malformed machine: {0}")]
    Malformed(String),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Smt(#[from] SmtError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub from: StateId,
    pub guard: Formula,
    pub to: StateId,
    pub reward: f64,
}

/// States are `0..state_count`. Terminal states end an episode once entered;
/// machines without terminal states leave episode ends to the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Srm {
    variables: Vec<String>,
    state_count: usize,
    initial: StateId,
    terminal: BTreeSet<StateId>,
    transitions: Vec<Transition>,
    outgoing: Vec<Vec<usize>>,
}

impl Srm {
    pub fn new(
        variables: Vec<String>,
        state_count: usize,
        initial: StateId,
        transitions: Vec<Transition>,
    ) -> Result<Srm, SrmError> {
        if state_count == 0 {
            return Err(SrmError::Malformed("at least one state is required".into()));
        }
        if initial >= state_count {
            return Err(SrmError::UnknownState(initial));
        }
        let mut seen = BTreeSet::new();
        for v in &variables {
            if v.is_empty() || !seen.insert(v.as_str()) {
                return Err(SrmError::Malformed(format!(
                    "bad or repeated variable name '{v}'"
                )));
            }
        }
        let mut outgoing = vec![Vec::new(); state_count];
        for (i, t) in transitions.iter().enumerate() {
            for s in [t.from, t.to] {
                if s >= state_count {
                    return Err(SrmError::UnknownState(s));
                }
            }
            t.guard.check_signature(&variables)?;
            if !t.guard.bool_vars().is_empty() {
                return Err(SrmError::Malformed(format!(
                    "guard {} has boolean symbols",
                    t.guard
                )));
            }
            if !t.reward.is_finite() {
                return Err(SrmError::Malformed(format!(
                    "non-finite reward on transition {i}"
                )));
            }
            outgoing[t.from].push(i);
        }
        Ok(Srm {
            variables,
            state_count,
            initial,
            terminal: BTreeSet::new(),
            transitions,
            outgoing,
        })
    }

    pub fn with_terminal(
        mut self,
        terminal: impl IntoIterator<Item = StateId>,
    ) -> Result<Srm, SrmError> {
        for s in terminal {
            if s >= self.state_count {
                return Err(SrmError::UnknownState(s));
            }
            self.terminal.insert(s);
        }
        Ok(self)
    }

    /// One state, one universal self-loop with output 0.
    pub fn basic(variables: Vec<String>) -> Srm {
        let t = Transition {
            from: 0,
            guard: Formula::Lit(true),
            to: 0,
            reward: 0.0,
        };
        Srm::new(variables, 1, 0, vec![t]).expect("basic machine is well formed")
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn is_terminal(&self, state: StateId) -> bool {
        self.terminal.contains(&state)
    }

    pub fn terminal_states(&self) -> &BTreeSet<StateId> {
        &self.terminal
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Indices into [`Srm::transitions`] of the transitions leaving `state`.
    pub fn outgoing(&self, state: StateId) -> &[usize] {
        &self.outgoing[state]
    }

    /// Index of the unique transition out of `state` whose guard holds.
    pub fn fire(&self, state: StateId, input: &[f64]) -> Result<usize, SrmError> {
        if state >= self.state_count {
            return Err(SrmError::UnknownState(state));
        }
        if input.len() != self.variables.len() {
            return Err(SrmError::Arity {
                expected: self.variables.len(),
                got: input.len(),
            });
        }
        let view = StateView::new(&self.variables, input);
        let mut found = None;
        for &i in &self.outgoing[state] {
            if self.transitions[i].guard.evaluate(&view)? {
                if let Some(first) = found {
                    return Err(SrmError::Nondeterministic {
                        state,
                        first,
                        second: i,
                        input: input.to_vec(),
                    });
                }
                found = Some(i);
            }
        }
        found.ok_or_else(|| SrmError::Incomplete {
            state,
            input: input.to_vec(),
        })
    }

    /// `(reward, next state)` when reading `input` in `state`.
    pub fn step_from(&self, state: StateId, input: &[f64]) -> Result<(f64, StateId), SrmError> {
        let t = &self.transitions[self.fire(state, input)?];
        Ok((t.reward, t.to))
    }

    pub fn cursor(&self) -> SrmCursor<'_> {
        SrmCursor {
            machine: self,
            state: self.initial,
        }
    }

    /// Rewards `r_1..r_n` for the input sequence `s_0..s_n`; `s_0` is not read.
    pub fn run(&self, states: &[Vec<f64>]) -> Result<Vec<f64>, SrmError> {
        let mut cursor = self.cursor();
        states
            .iter()
            .skip(1)
            .map(|s| cursor.step(s).map(|(r, _)| r))
            .collect()
    }

    pub fn validate(
        &self,
        domain: &Domain,
        solver: &SolverConfig,
    ) -> Result<ValidationReport, SmtError> {
        validate(self, domain, solver)
    }

    pub fn to_toml(&self) -> String {
        let file = SrmFile {
            variables: self.variables.clone(),
            states: self.state_count,
            initial: self.initial,
            terminal: self.terminal.iter().copied().collect(),
            transitions: self
                .transitions
                .iter()
                .map(|t| TransitionRecord {
                    from: t.from,
                    guard: print_formula(&t.guard),
                    to: t.to,
                    reward: t.reward,
                })
                .collect(),
        };
        toml::to_string(&file).expect("machine serializes")
    }

    pub fn from_toml(text: &str) -> Result<Srm, SrmError> {
        let file: SrmFile = toml::from_str(text).map_err(|e| SrmError::Malformed(e.to_string()))?;
        let mut transitions = Vec::with_capacity(file.transitions.len());
        for t in file.transitions {
            let guard = parse_formula_in(&t.guard, &file.variables)?;
            transitions.push(Transition {
                from: t.from,
                guard,
                to: t.to,
                reward: t.reward,
            });
        }
        Srm::new(file.variables, file.states, file.initial, transitions)?
            .with_terminal(file.terminal)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph srm {\n  rankdir=LR;\n  init [shape=point];\n");
        for q in 0..self.state_count {
            let shape = if self.is_terminal(q) {
                "doublecircle"
            } else {
                "circle"
            };
            let _ = writeln!(out, "  q{q} [shape={shape}];");
        }
        let _ = writeln!(out, "  init -> q{};", self.initial);
        for t in &self.transitions {
            let label = format!("{} / {}", print_formula(&t.guard), t.reward).replace('"', "\\\"");
            let _ = writeln!(out, "  q{} -> q{} [label=\"{label}\"];", t.from, t.to);
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SrmFile {
    variables: Vec<String>,
    states: usize,
    initial: StateId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    terminal: Vec<StateId>,
    #[serde(default)]
    transitions: Vec<TransitionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionRecord {
    from: StateId,
    guard: String,
    to: StateId,
    reward: f64,
}

/// Per-episode position in a machine.
#[derive(Debug, Clone)]
pub struct SrmCursor<'a> {
    machine: &'a Srm,
    state: StateId,
}

impl<'a> SrmCursor<'a> {
    pub fn state(&self) -> StateId {
        self.state
    }

    pub fn machine(&self) -> &'a Srm {
        self.machine
    }

    pub fn step(&mut self, input: &[f64]) -> Result<(f64, StateId), SrmError> {
        let (r, q) = self.machine.step_from(self.state, input)?;
        self.state = q;
        Ok((r, q))
    }

    pub fn reset(&mut self) {
        self.state = self.machine.initial;
    }
}

/// Region of the input space over which completeness is required.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub constraint: Formula,
}

impl Domain {
    pub fn unbounded() -> Domain {
        Domain {
            constraint: Formula::Lit(true),
        }
    }

    /// `lo <= x <= hi` per variable, or `lo <= x < hi` with `hi_open`.
    pub fn boxed(bounds: &[(&str, f64, f64)], hi_open: bool) -> Domain {
        use crate::logic::CmpOp;
        let mut parts = Vec::new();
        for (v, lo, hi) in bounds {
            parts.push(Formula::var_cmp(v, CmpOp::Ge, *lo));
            parts.push(Formula::var_cmp(
                v,
                if hi_open { CmpOp::Lt } else { CmpOp::Le },
                *hi,
            ));
        }
        Domain {
            constraint: Formula::And(parts),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Overlap {
        state: StateId,
        first: usize,
        second: usize,
        witness: Vec<f64>,
    },
    Gap {
        state: StateId,
        witness: Vec<f64>,
    },
    /// The solver could not decide a check.
    Undecided {
        state: StateId,
        check: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn deterministic(&self) -> bool {
        !self
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Overlap { .. }))
    }

    pub fn complete(&self) -> bool {
        !self
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Gap { .. }))
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "valid: deterministic and complete");
        }
        for v in &self.violations {
            match v {
                Violation::Overlap {
                    state,
                    first,
                    second,
                    witness,
                } => writeln!(
                    f,
                    "state {state}: transitions {first} and {second} overlap at {witness:?}"
                )?,
                Violation::Gap { state, witness } => {
                    writeln!(f, "state {state}: no guard holds at {witness:?}")?
                }
                Violation::Undecided { state, check } => {
                    writeln!(f, "state {state}: solver could not decide {check}")?
                }
            }
        }
        Ok(())
    }
}

fn point(machine: &Srm, witness: &std::collections::BTreeMap<String, f64>) -> Vec<f64> {
    machine
        .variables
        .iter()
        .map(|v| witness.get(v).copied().unwrap_or(0.0))
        .collect()
}

/// Pairwise guard overlap and per-state coverage of `domain`.
pub fn validate(
    machine: &Srm,
    domain: &Domain,
    solver: &SolverConfig,
) -> Result<ValidationReport, SmtError> {
    let mut report = ValidationReport::default();
    for p in 0..machine.state_count {
        let out = &machine.outgoing[p];
        for (a, &i) in out.iter().enumerate() {
            for &j in &out[a + 1..] {
                let fs = [
                    domain.constraint.clone(),
                    machine.transitions[i].guard.clone(),
                    machine.transitions[j].guard.clone(),
                ];
                match conjunction_sat(&fs, solver)? {
                    SatResult::Sat(w) => report.violations.push(Violation::Overlap {
                        state: p,
                        first: i,
                        second: j,
                        witness: point(machine, &w),
                    }),
                    SatResult::Unsat => {}
                    SatResult::Unknown => report.violations.push(Violation::Undecided {
                        state: p,
                        check: format!("overlap of {i} and {j}"),
                    }),
                }
            }
        }
        let covered = Formula::Or(
            out.iter()
                .map(|&i| machine.transitions[i].guard.clone())
                .collect(),
        );
        let fs = [domain.constraint.clone(), Formula::not(covered)];
        match conjunction_sat(&fs, solver)? {
            SatResult::Sat(w) => report.violations.push(Violation::Gap {
                state: p,
                witness: point(machine, &w),
            }),
            SatResult::Unsat => {}
            SatResult::Unknown => report.violations.push(Violation::Undecided {
                state: p,
                check: "coverage".into(),
            }),
        }
    }
    Ok(report)
}
