//! Textual form of formulas: an s-expression syntax that is a subset of
//! SMT-LIB2 term syntax (with `iff` as an alias for boolean `=`).

use super::formula::{CmpOp, Formula, Term};
use super::sexpr::{self, Sexp};
use super::LogicError;

/// Formats a real literal in SMT-LIB decimal syntax: always with a decimal
/// point, negatives as `(- c)`.
pub fn format_real(x: f64) -> String {
    assert!(x.is_finite(), "non-finite literal {x}");
    let mag = x.abs();
    let mut s = format!("{mag}");
    if !s.contains('.') {
        s.push_str(".0");
    }
    if x.is_sign_negative() && x != 0.0 {
        format!("(- {s})")
    } else {
        s
    }
}

pub fn print_term(t: &Term) -> String {
    let mut out = String::new();
    write_term(t, &mut out);
    out
}

fn write_term(t: &Term, out: &mut String) {
    match t {
        Term::Const(c) => out.push_str(&format_real(*c)),
        Term::Var(v) => out.push_str(v),
        Term::Add(ts) | Term::Sub(ts) => {
            out.push_str(if matches!(t, Term::Add(_)) {
                "(+"
            } else {
                "(-"
            });
            for t in ts {
                out.push(' ');
                write_term(t, out);
            }
            out.push(')');
        }
        Term::Scale(c, t) => {
            out.push_str("(* ");
            out.push_str(&format_real(*c));
            out.push(' ');
            write_term(t, out);
            out.push(')');
        }
    }
}

/// Prints in the formula text format (`iff` for biconditionals).
pub fn print_formula(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(f, &mut out, false);
    out
}

/// Prints as a standard SMT-LIB2 term: `iff` becomes `=`, empty
/// conjunctions/disjunctions become literals.
pub fn to_smtlib(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(f, &mut out, true);
    out
}

fn write_formula(f: &Formula, out: &mut String, smt: bool) {
    match f {
        Formula::Lit(b) => out.push_str(if *b { "true" } else { "false" }),
        Formula::BoolVar(v) => out.push_str(v),
        Formula::Cmp(op, l, r) => {
            out.push('(');
            out.push_str(op.symbol());
            out.push(' ');
            write_term(l, out);
            out.push(' ');
            write_term(r, out);
            out.push(')');
        }
        Formula::Not(g) => {
            out.push_str("(not ");
            write_formula(g, out, smt);
            out.push(')');
        }
        Formula::And(gs) | Formula::Or(gs) => {
            let is_and = matches!(f, Formula::And(_));
            if smt && gs.is_empty() {
                out.push_str(if is_and { "true" } else { "false" });
                return;
            }
            if smt && gs.len() == 1 {
                write_formula(&gs[0], out, smt);
                return;
            }
            out.push_str(if is_and { "(and" } else { "(or" });
            for g in gs {
                out.push(' ');
                write_formula(g, out, smt);
            }
            out.push(')');
        }
        Formula::Iff(a, b) => {
            out.push_str(if smt { "(= " } else { "(iff " });
            write_formula(a, out, smt);
            out.push(' ');
            write_formula(b, out, smt);
            out.push(')');
        }
    }
}

/// Parses a formula from text. Bare identifiers in formula position are
/// boolean symbols; in term position they are real variables.
pub fn parse_formula(text: &str) -> Result<Formula, LogicError> {
    let s = sexpr::parse_one(text).map_err(|e| LogicError::Syntax {
        pos: e.pos,
        message: e.message,
    })?;
    formula_from_sexp(&s)
}

/// Parses and checks every real variable against `signature`.
pub fn parse_formula_in(text: &str, signature: &[String]) -> Result<Formula, LogicError> {
    let f = parse_formula(text)?;
    f.check_signature(signature)?;
    Ok(f)
}

fn syntax(pos: usize, message: impl Into<String>) -> LogicError {
    LogicError::Syntax {
        pos,
        message: message.into(),
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || "_.'!@$%^&~?".contains(c))
}

const RESERVED: &[&str] = &[
    "and", "or", "not", "iff", "true", "false", "let", "forall", "exists", "ite",
];

pub(crate) fn formula_from_sexp(s: &Sexp) -> Result<Formula, LogicError> {
    match s {
        Sexp::Atom { text, pos } => match text.as_str() {
            "true" => Ok(Formula::Lit(true)),
            "false" => Ok(Formula::Lit(false)),
            t if is_identifier(t) && !RESERVED.contains(&t) => Ok(Formula::BoolVar(t.to_string())),
            t => Err(syntax(*pos, format!("expected formula, found '{t}'"))),
        },
        Sexp::List { items, pos } => {
            let head = items
                .first()
                .and_then(Sexp::as_atom)
                .ok_or_else(|| syntax(*pos, "expected operator"))?;
            let args = &items[1..];
            let op = match head {
                ">=" => Some(CmpOp::Ge),
                ">" => Some(CmpOp::Gt),
                "<=" => Some(CmpOp::Le),
                "<" => Some(CmpOp::Lt),
                "=" => Some(CmpOp::Eq),
                _ => None,
            };
            if let Some(op) = op {
                if args.len() != 2 {
                    return Err(syntax(
                        *pos,
                        format!("'{head}' takes 2 arguments, got {}", args.len()),
                    ));
                }
                // boolean equality is written as iff
                if op == CmpOp::Eq && (looks_boolean(&args[0]) || looks_boolean(&args[1])) {
                    return Ok(Formula::iff(
                        formula_from_sexp(&args[0])?,
                        formula_from_sexp(&args[1])?,
                    ));
                }
                return Ok(Formula::Cmp(
                    op,
                    term_from_sexp(&args[0])?,
                    term_from_sexp(&args[1])?,
                ));
            }
            match head {
                "and" | "or" => {
                    let fs = args
                        .iter()
                        .map(formula_from_sexp)
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(if head == "and" {
                        Formula::And(fs)
                    } else {
                        Formula::Or(fs)
                    })
                }
                "not" => {
                    if args.len() != 1 {
                        return Err(syntax(
                            *pos,
                            format!("'not' takes 1 argument, got {}", args.len()),
                        ));
                    }
                    Ok(Formula::not(formula_from_sexp(&args[0])?))
                }
                "iff" => {
                    if args.len() != 2 {
                        return Err(syntax(
                            *pos,
                            format!("'iff' takes 2 arguments, got {}", args.len()),
                        ));
                    }
                    Ok(Formula::iff(
                        formula_from_sexp(&args[0])?,
                        formula_from_sexp(&args[1])?,
                    ))
                }
                other => Err(syntax(*pos, format!("unknown operator '{other}'"))),
            }
        }
    }
}

fn looks_boolean(s: &Sexp) -> bool {
    match s {
        Sexp::Atom { text, .. } => text == "true" || text == "false",
        Sexp::List { items, .. } => matches!(
            items.first().and_then(Sexp::as_atom),
            Some("and" | "or" | "not" | "iff" | ">=" | ">" | "<=" | "<" | "=")
        ),
    }
}

/// Parses a decimal literal, `(- c)` or `(/ a b)` into a constant.
pub(crate) fn const_from_sexp(s: &Sexp) -> Option<f64> {
    match s {
        Sexp::Atom { text, .. } => parse_decimal(text),
        Sexp::List { items, .. } => {
            let head = items.first()?.as_atom()?;
            match (head, items.len()) {
                ("-", 2) => const_from_sexp(&items[1]).map(|c| -c),
                ("/", 3) => Some(const_from_sexp(&items[1])? / const_from_sexp(&items[2])?),
                _ => None,
            }
        }
    }
}

fn parse_decimal(text: &str) -> Option<f64> {
    let t = text.strip_prefix('-').unwrap_or(text);
    if t.is_empty() || !t.chars().all(|c| c.is_ascii_digit() || c == '.') || t.starts_with('.') {
        return None;
    }
    if t.matches('.').count() > 1 {
        return None;
    }
    text.parse::<f64>().ok()
}

fn term_from_sexp(s: &Sexp) -> Result<Term, LogicError> {
    if let Some(c) = const_from_sexp(s) {
        return Ok(Term::Const(c));
    }
    match s {
        Sexp::Atom { text, pos } => {
            if is_identifier(text) && !RESERVED.contains(&text.as_str()) {
                Ok(Term::Var(text.clone()))
            } else {
                Err(syntax(*pos, format!("expected term, found '{text}'")))
            }
        }
        Sexp::List { items, pos } => {
            let head = items
                .first()
                .and_then(Sexp::as_atom)
                .ok_or_else(|| syntax(*pos, "expected operator"))?;
            let args = &items[1..];
            match head {
                "+" => Ok(Term::Add(
                    args.iter().map(term_from_sexp).collect::<Result<_, _>>()?,
                )),
                "-" => match args.len() {
                    0 => Err(syntax(*pos, "'-' needs at least 1 argument")),
                    1 => Ok(Term::Scale(-1.0, Box::new(term_from_sexp(&args[0])?))),
                    _ => Ok(Term::Sub(
                        args.iter().map(term_from_sexp).collect::<Result<_, _>>()?,
                    )),
                },
                "*" => {
                    if args.len() != 2 {
                        return Err(syntax(
                            *pos,
                            format!("'*' takes 2 arguments, got {}", args.len()),
                        ));
                    }
                    if let Some(c) = const_from_sexp(&args[0]) {
                        Ok(Term::Scale(c, Box::new(term_from_sexp(&args[1])?)))
                    } else if let Some(c) = const_from_sexp(&args[1]) {
                        Ok(Term::Scale(c, Box::new(term_from_sexp(&args[0])?)))
                    } else {
                        Err(syntax(
                            *pos,
                            "non-linear product: one factor of '*' must be a constant",
                        ))
                    }
                }
                other => Err(syntax(*pos, format!("unknown term operator '{other}'"))),
            }
        }
    }
}
