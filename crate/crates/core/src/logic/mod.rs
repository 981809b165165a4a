//! Quantifier-free linear real arithmetic: formulas, evaluation, substitution,
//! text format and a satisfiability fast path for box-shaped formulas.

mod boxes;
mod formula;
pub mod sexpr;
mod template;
mod text;

pub use boxes::{
    box_conjunction_satisfiable, box_conjunction_witness, to_dnf, Bound, Cube, Interval,
};
pub use formula::{CmpOp, Formula, StateView, Term, Valuation};
pub use template::{exclusive_guard, BoxTemplate, Slot};
pub use text::{
    format_real, parse_formula, parse_formula_in, print_formula, print_term, to_smtlib,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LogicError {
    #[error("variable '{0}' has no value")]
    MissingVariable(String),
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("formula outside the box fragment: {0}")]
    UnsupportedFragment(String),
}

/// `s |= f`
pub fn evaluate(f: &Formula, state: &dyn Valuation) -> Result<bool, LogicError> {
    f.evaluate(state)
}

/// Replaces the state variables of `f` by the values in `state`.
pub fn substitute(f: &Formula, state: &dyn Valuation) -> Formula {
    f.substitute(state)
}
