//! Inference of a machine with the fewest states that reproduces a set of
//! counterexample episodes, by constraint solving.

mod encode;

pub use encode::{encode_ft, encode_gf, extract_srm, Encoding, GuardOverlaps};

use std::collections::HashSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::logic::{parse_formula_in, Formula};
use crate::smt::{conjunction_sat, SatResult, SmtError, SolverConfig, SolverSession, Verdict};
use crate::srm::{Domain, Srm, SrmError, Transition};

#[derive(Debug, thiserror::Error)]
pub enum InferError {
    #[error("malformed counterexample: {0}")]
    Malformed(String),
    #[error("line {line}: {message}")]
    Corpus { line: usize, message: String },
    #[error("no counterexamples to learn from")]
    Empty,
    #[error("solver model lacks symbol '{0}'")]
    MissingSymbol(String),
    #[error("extracted machine disagrees with counterexample {index}")]
    Inconsistent { index: usize, transcript: String },
    #[error("solver could not decide the gap of state {0}")]
    Undecided(usize),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Machine(#[from] SrmError),
    #[error(transparent)]
    Smt(#[from] SmtError),
}

/// An episode prefix `s_0..s_n` with the rewards `r_1..r_n` observed on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    states: Vec<Vec<f64>>,
    rewards: Vec<f64>,
}

impl Counterexample {
    pub fn new(states: Vec<Vec<f64>>, rewards: Vec<f64>) -> Result<Counterexample, InferError> {
        if states.len() < 2 {
            return Err(InferError::Malformed(
                "at least two states are required".into(),
            ));
        }
        if rewards.len() + 1 != states.len() {
            return Err(InferError::Malformed(format!(
                "{} states need {} rewards, got {}",
                states.len(),
                states.len() - 1,
                rewards.len()
            )));
        }
        let width = states[0].len();
        if states.iter().any(|s| s.len() != width) {
            return Err(InferError::Malformed("states differ in width".into()));
        }
        if states
            .iter()
            .flatten()
            .chain(&rewards)
            .any(|v| !v.is_finite())
        {
            return Err(InferError::Malformed("non-finite value".into()));
        }
        Ok(Counterexample { states, rewards })
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Number of transitions, `n`.
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn key(&self) -> Vec<u64> {
        let mut k = vec![self.states.len() as u64];
        k.extend(self.states.iter().flatten().map(|v| v.to_bits()));
        k.extend(self.rewards.iter().map(|v| v.to_bits()));
        k
    }

    pub fn consistent_with(&self, srm: &Srm) -> Result<bool, SrmError> {
        Ok(srm.run(&self.states)? == self.rewards)
    }
}

/// Counterexamples in insertion order; exact duplicates are stored once.
#[derive(Debug, Clone, Default)]
pub struct CounterexampleSet {
    items: Vec<Counterexample>,
    seen: HashSet<Vec<u64>>,
}

impl CounterexampleSet {
    pub fn new() -> CounterexampleSet {
        CounterexampleSet::default()
    }

    /// False when an identical episode is already stored.
    pub fn push(&mut self, e: Counterexample) -> bool {
        if !self.seen.insert(e.key()) {
            return false;
        }
        self.items.push(e);
        true
    }

    pub fn items(&self) -> &[Counterexample] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn width(&self) -> Option<usize> {
        self.items.first().map(|e| e.states[0].len())
    }

    /// One JSON object `{"states": [...], "rewards": [...]}` per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.items {
            out.push_str(&serde_json::to_string(e).expect("plain data serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<CounterexampleSet, InferError> {
        let mut set = CounterexampleSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let corpus = |message: String| InferError::Corpus {
                line: i + 1,
                message,
            };
            let raw: Counterexample =
                serde_json::from_str(line).map_err(|e| corpus(e.to_string()))?;
            let e =
                Counterexample::new(raw.states, raw.rewards).map_err(|e| corpus(e.to_string()))?;
            if set.width().is_some_and(|w| w != e.states[0].len()) {
                return Err(corpus("state width differs from earlier records".into()));
            }
            set.push(e);
        }
        Ok(set)
    }
}

impl FromIterator<Counterexample> for CounterexampleSet {
    fn from_iter<I: IntoIterator<Item = Counterexample>>(iter: I) -> Self {
        let mut set = CounterexampleSet::new();
        for e in iter {
            set.push(e);
        }
        set
    }
}

/// Parses a guard list: one formula per non-empty line, `;` starts a comment.
pub fn parse_guards(text: &str, signature: &[String]) -> Result<Vec<Formula>, InferError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split(';').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f = parse_formula_in(body, signature).map_err(|e| InferError::Corpus {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(f);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Guards are drawn from a fixed formula set.
    Given(Vec<Formula>),
    /// Every state gets `formulas` box templates whose bounds are solved for.
    Templates { formulas: usize },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Given(_) => "gf",
            Mode::Templates { .. } => "ft",
        }
    }
}

#[derive(Debug, Clone)]
pub struct InferConfig {
    pub solver: SolverConfig,
    /// Region over which guard overlaps and coverage gaps are decided.
    pub domain: Domain,
    pub max_states: usize,
    /// Template mode only: grow the per-state formula count together with
    /// the state count instead of keeping it fixed.
    pub grow_formulas: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            solver: SolverConfig::from_env(),
            domain: Domain::unbounded(),
            max_states: 6,
            grow_formulas: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Found {
        srm: Srm,
        states: usize,
    },
    UnsatAtBudget,
    /// The solver gave up at this state count.
    SolverUnknown {
        states: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InferStats {
    pub elapsed: Duration,
    /// Assertions sent over all rounds.
    pub assertions: usize,
    /// Solver queries, one per tried size.
    pub rounds: usize,
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub outcome: Outcome,
    pub stats: InferStats,
    /// Solver transcript of the final round.
    pub transcript: Vec<String>,
}

impl InferenceResult {
    pub fn srm(&self) -> Option<&Srm> {
        match &self.outcome {
            Outcome::Found { srm, .. } => Some(srm),
            _ => None,
        }
    }
}

/// Adds to every state whose guards leave part of `domain` uncovered a
/// self-loop on the uncovered part with reward 0.
pub fn complete_srm(
    machine: &Srm,
    domain: &Domain,
    solver: &SolverConfig,
) -> Result<Srm, InferError> {
    let mut transitions = machine.transitions().to_vec();
    for p in 0..machine.state_count() {
        let guards: Vec<Formula> = machine
            .outgoing(p)
            .iter()
            .map(|&i| machine.transitions()[i].guard.clone())
            .collect();
        let rest = Formula::not(Formula::Or(guards));
        match conjunction_sat(&[domain.constraint.clone(), rest.clone()], solver)? {
            SatResult::Unsat => {}
            SatResult::Sat(_) => transitions.push(Transition {
                from: p,
                guard: rest,
                to: p,
                reward: 0.0,
            }),
            SatResult::Unknown => return Err(InferError::Undecided(p)),
        }
    }
    let out = Srm::new(
        machine.variables().to_vec(),
        machine.state_count(),
        machine.initial(),
        transitions,
    )?;
    Ok(out.with_terminal(machine.terminal_states().iter().copied())?)
}

/// Sizes tried in order: `(states, formulas per state)`.
fn schedule(mode: &Mode, config: &InferConfig) -> Vec<(usize, usize)> {
    match mode {
        Mode::Given(_) => (1..=config.max_states).map(|n| (n, 0)).collect(),
        Mode::Templates { formulas } if !config.grow_formulas => {
            (1..=config.max_states).map(|n| (n, *formulas)).collect()
        }
        Mode::Templates { formulas } => {
            // diagonals of the (states, formulas) grid, fewest states first
            let mut out = Vec::new();
            for total in 2..=config.max_states + formulas {
                for n in 1..total {
                    let f = total - n;
                    if n <= config.max_states && f <= *formulas {
                        out.push((n, f));
                    }
                }
            }
            out
        }
    }
}

/// Transitions no counterexample step fires carry whatever target and output
/// the solver happened to pick; they become reward-0 self-loops so the
/// hypothesis predicts nothing the data does not support.
pub fn settle_unused(srm: &Srm, examples: &CounterexampleSet) -> Result<Srm, SrmError> {
    let mut fired = vec![false; srm.transitions().len()];
    for e in examples.items() {
        let mut u = srm.initial();
        for s in &e.states()[1..] {
            let i = srm.fire(u, s)?;
            fired[i] = true;
            u = srm.transitions()[i].to;
        }
    }
    let transitions = srm
        .transitions()
        .iter()
        .zip(&fired)
        .map(|(t, &used)| {
            if used {
                t.clone()
            } else {
                Transition {
                    to: t.from,
                    reward: 0.0,
                    ..t.clone()
                }
            }
        })
        .collect();
    Srm::new(
        srm.variables().to_vec(),
        srm.state_count(),
        srm.initial(),
        transitions,
    )
}

/// Tries growing sizes until the encoding is satisfiable. The machine found
/// is completed over the domain and replayed against every counterexample.
pub fn infer_minimal(
    examples: &CounterexampleSet,
    signature: &[String],
    mode: &Mode,
    config: &InferConfig,
) -> Result<InferenceResult, InferError> {
    if examples.is_empty() {
        return Err(InferError::Empty);
    }
    if examples.width() != Some(signature.len()) {
        return Err(InferError::Malformed(format!(
            "states have width {:?}, signature has {}",
            examples.width(),
            signature.len()
        )));
    }
    let start = Instant::now();
    let mut stats = InferStats::default();
    let overlaps = match mode {
        Mode::Given(guards) => {
            if guards.is_empty() {
                return Err(InferError::Config("the given guard set is empty".into()));
            }
            Some(GuardOverlaps::compute(
                guards,
                &config.domain,
                &config.solver,
            )?)
        }
        Mode::Templates { formulas: 0 } => {
            return Err(InferError::Config(
                "at least one formula per state is required".into(),
            ))
        }
        Mode::Templates { .. } => None,
    };
    let mut transcript = Vec::new();
    for (n, f) in schedule(mode, config) {
        let encoding = match (mode, &overlaps) {
            (Mode::Given(guards), Some(ov)) => encode_gf(examples, n, guards, ov, signature),
            _ => encode_ft(examples, n, f, signature),
        };
        let mut session = SolverSession::start_with_logic(&config.solver, Encoding::LOGIC)?;
        encoding.load(&mut session)?;
        stats.rounds += 1;
        stats.assertions += session.assertion_count();
        let verdict = session.check_sat()?;
        log::debug!("{} round n={n} f={f}: {verdict:?}", mode.name());
        match verdict {
            Verdict::Unsat => {
                transcript = session.transcript().to_vec();
            }
            Verdict::Unknown => {
                stats.elapsed = start.elapsed();
                return Ok(InferenceResult {
                    outcome: Outcome::SolverUnknown { states: n },
                    stats,
                    transcript: session.transcript().to_vec(),
                });
            }
            Verdict::Sat => {
                let model = session.get_model()?;
                let srm = settle_unused(
                    &extract_srm(&model, &encoding, signature, &config.domain, &config.solver)?,
                    examples,
                )?;
                for (index, e) in examples.items().iter().enumerate() {
                    if !e.consistent_with(&srm)? {
                        return Err(InferError::Inconsistent {
                            index,
                            transcript: session.transcript_text(),
                        });
                    }
                }
                stats.elapsed = start.elapsed();
                return Ok(InferenceResult {
                    outcome: Outcome::Found { srm, states: n },
                    stats,
                    transcript: session.transcript().to_vec(),
                });
            }
        }
    }
    stats.elapsed = start.elapsed();
    Ok(InferenceResult {
        outcome: Outcome::UnsatAtBudget,
        stats,
        transcript,
    })
}
