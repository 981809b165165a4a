use std::collections::BTreeSet;
use std::fmt;

use super::LogicError;

/// Comparison operators of the linear fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Eq => "=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Eq => lhs == rhs,
        }
    }

    /// Operator obtained by swapping the two sides (`a op b` iff `b flip(op) a`).
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Eq => CmpOp::Eq,
        }
    }
}

/// Linear real-valued term.
///
/// Products are only allowed between a constant and a term, which keeps every
/// comparison linear by construction.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Const(f64),
    Var(String),
    Add(Vec<Term>),
    /// `(- t0 t1 ...)`, at least two operands.
    Sub(Vec<Term>),
    Scale(f64, Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn eval(&self, val: &dyn Valuation) -> Result<f64, LogicError> {
        Ok(match self {
            Term::Const(c) => *c,
            Term::Var(v) => val
                .real(v)
                .ok_or_else(|| LogicError::MissingVariable(v.clone()))?,
            Term::Add(ts) => {
                let mut acc = 0.0;
                for t in ts {
                    acc += t.eval(val)?;
                }
                acc
            }
            Term::Sub(ts) => {
                let mut it = ts.iter();
                let mut acc = match it.next() {
                    Some(t) => t.eval(val)?,
                    None => 0.0,
                };
                for t in it {
                    acc -= t.eval(val)?;
                }
                acc
            }
            Term::Scale(c, t) => c * t.eval(val)?,
        })
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Const(_) => {}
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Add(ts) | Term::Sub(ts) => ts.iter().for_each(|t| t.collect_vars(out)),
            Term::Scale(_, t) => t.collect_vars(out),
        }
    }

    fn substitute(&self, val: &dyn Valuation) -> Term {
        match self {
            Term::Const(c) => Term::Const(*c),
            Term::Var(v) => match val.real(v) {
                Some(x) => Term::Const(x),
                None => Term::Var(v.clone()),
            },
            Term::Add(ts) => Term::Add(ts.iter().map(|t| t.substitute(val)).collect()),
            Term::Sub(ts) => Term::Sub(ts.iter().map(|t| t.substitute(val)).collect()),
            Term::Scale(c, t) => Term::Scale(*c, Box::new(t.substitute(val))),
        }
    }

    /// `Some((var, coeff, offset))` when the term is `coeff * var + offset`
    /// (or `Some((None, 0, offset))` when constant).
    pub(crate) fn as_affine(&self) -> Option<(Option<String>, f64, f64)> {
        match self {
            Term::Const(c) => Some((None, 0.0, *c)),
            Term::Var(v) => Some((Some(v.clone()), 1.0, 0.0)),
            Term::Scale(c, t) => {
                let (v, a, b) = t.as_affine()?;
                Some((v, a * c, b * c))
            }
            Term::Add(ts) => {
                let mut var: Option<String> = None;
                let (mut a, mut b) = (0.0, 0.0);
                for t in ts {
                    let (tv, ta, tb) = t.as_affine()?;
                    if let Some(tv) = tv {
                        match &var {
                            Some(v) if *v != tv => return None,
                            _ => var = Some(tv),
                        }
                    }
                    a += ta;
                    b += tb;
                }
                Some((var, a, b))
            }
            Term::Sub(ts) => {
                let mut var: Option<String> = None;
                let (mut a, mut b) = (0.0, 0.0);
                for (k, t) in ts.iter().enumerate() {
                    let (tv, ta, tb) = t.as_affine()?;
                    if let Some(tv) = tv {
                        match &var {
                            Some(v) if *v != tv => return None,
                            _ => var = Some(tv),
                        }
                    }
                    let sign = if k == 0 { 1.0 } else { -1.0 };
                    a += sign * ta;
                    b += sign * tb;
                }
                Some((var, a, b))
            }
        }
    }
}

/// Quantifier-free LRA formula.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Lit(bool),
    /// Boolean symbol, e.g. the polarity slot of a box template.
    BoolVar(String),
    Cmp(CmpOp, Term, Term),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Iff(Box<Formula>, Box<Formula>),
}

/// Source of variable values for evaluation and substitution.
pub trait Valuation {
    fn real(&self, name: &str) -> Option<f64>;
    fn boolean(&self, _name: &str) -> Option<bool> {
        None
    }
}

impl Valuation for std::collections::HashMap<String, f64> {
    fn real(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Valuation for std::collections::BTreeMap<String, f64> {
    fn real(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

/// An ordered state-space signature paired with a concrete state vector.
#[derive(Debug, Clone, Copy)]
pub struct StateView<'a> {
    pub names: &'a [String],
    pub values: &'a [f64],
}

impl<'a> StateView<'a> {
    pub fn new(names: &'a [String], values: &'a [f64]) -> Self {
        debug_assert_eq!(names.len(), values.len());
        StateView { names, values }
    }
}

impl Valuation for StateView<'_> {
    fn real(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

impl Formula {
    pub fn cmp(lhs: Term, op: CmpOp, rhs: Term) -> Formula {
        Formula::Cmp(op, lhs, rhs)
    }

    /// `var op c`
    pub fn var_cmp(var: &str, op: CmpOp, c: f64) -> Formula {
        Formula::Cmp(op, Term::var(var), Term::Const(c))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    /// Half-open axis-aligned box `lo_i <= x_i < hi_i` over the given variables.
    pub fn half_open_box(bounds: &[(&str, f64, f64)]) -> Formula {
        let mut parts = Vec::with_capacity(bounds.len() * 2);
        for (v, lo, hi) in bounds {
            parts.push(Formula::var_cmp(v, CmpOp::Ge, *lo));
            parts.push(Formula::var_cmp(v, CmpOp::Lt, *hi));
        }
        Formula::And(parts)
    }

    pub fn evaluate(&self, val: &dyn Valuation) -> Result<bool, LogicError> {
        Ok(match self {
            Formula::Lit(b) => *b,
            Formula::BoolVar(v) => val
                .boolean(v)
                .ok_or_else(|| LogicError::MissingVariable(v.clone()))?,
            Formula::Cmp(op, l, r) => op.holds(l.eval(val)?, r.eval(val)?),
            Formula::Not(f) => !f.evaluate(val)?,
            Formula::And(fs) => {
                for f in fs {
                    if !f.evaluate(val)? {
                        return Ok(false);
                    }
                }
                true
            }
            Formula::Or(fs) => {
                for f in fs {
                    if f.evaluate(val)? {
                        return Ok(true);
                    }
                }
                false
            }
            Formula::Iff(a, b) => a.evaluate(val)? == b.evaluate(val)?,
        })
    }

    /// Replaces every real variable assigned by `val` with its value. Variables
    /// not assigned (template slots) stay symbolic.
    pub fn substitute(&self, val: &dyn Valuation) -> Formula {
        match self {
            Formula::Lit(b) => Formula::Lit(*b),
            Formula::BoolVar(v) => match val.boolean(v) {
                Some(b) => Formula::Lit(b),
                None => Formula::BoolVar(v.clone()),
            },
            Formula::Cmp(op, l, r) => Formula::Cmp(*op, l.substitute(val), r.substitute(val)),
            Formula::Not(f) => Formula::not(f.substitute(val)),
            Formula::And(fs) => Formula::And(fs.iter().map(|f| f.substitute(val)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|f| f.substitute(val)).collect()),
            Formula::Iff(a, b) => Formula::iff(a.substitute(val), b.substitute(val)),
        }
    }

    /// Substitutes the state variables `names` with `values`, failing if one of
    /// them does not occur in the valuation.
    pub fn substitute_state(
        &self,
        names: &[String],
        values: &[f64],
    ) -> Result<Formula, LogicError> {
        if names.len() != values.len() {
            return Err(LogicError::MissingVariable(
                names.get(values.len()).cloned().unwrap_or_default(),
            ));
        }
        Ok(self.substitute(&StateView::new(names, values)))
    }

    pub fn real_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let Formula::Cmp(_, l, r) = f {
                l.collect_vars(&mut out);
                r.collect_vars(&mut out);
            }
        });
        out
    }

    pub fn bool_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let Formula::BoolVar(v) = f {
                out.insert(v.clone());
            }
        });
        out
    }

    /// All free symbols, real and boolean.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = self.real_vars();
        out.extend(self.bool_vars());
        out
    }

    fn visit(&self, f: &mut dyn FnMut(&Formula)) {
        f(self);
        match self {
            Formula::Not(g) => g.visit(f),
            Formula::And(gs) | Formula::Or(gs) => gs.iter().for_each(|g| g.visit(f)),
            Formula::Iff(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// Fails with `UnknownVariable` when a real variable is outside `signature`.
    pub fn check_signature(&self, signature: &[String]) -> Result<(), LogicError> {
        for v in self.real_vars() {
            if !signature.contains(&v) {
                return Err(LogicError::UnknownVariable(v));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::print_formula(self))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::print_term(self))
    }
}
