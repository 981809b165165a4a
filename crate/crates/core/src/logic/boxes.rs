//! Satisfiability for the box fragment: boolean combinations of
//! single-variable bounds. Formulas are expanded into a union of axis-aligned
//! boxes and intersected interval-wise.

use std::collections::BTreeMap;

use super::formula::{CmpOp, Formula};
use super::LogicError;

const MAX_CUBES: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub value: f64,
    pub strict: bool,
}

/// Interval over one variable; `None` means unbounded on that side.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Interval {
    pub lo: Option<Bound>,
    pub hi: Option<Bound>,
}

impl Interval {
    fn intersect(&self, other: &Interval) -> Interval {
        let lo = match (self.lo, other.lo) {
            (None, b) | (b, None) => b,
            (Some(a), Some(b)) => Some(if a.value > b.value || (a.value == b.value && a.strict) {
                a
            } else {
                b
            }),
        };
        let hi = match (self.hi, other.hi) {
            (None, b) | (b, None) => b,
            (Some(a), Some(b)) => Some(if a.value < b.value || (a.value == b.value && a.strict) {
                a
            } else {
                b
            }),
        };
        Interval { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        match (self.lo, self.hi) {
            (Some(l), Some(h)) => {
                l.value > h.value || (l.value == h.value && (l.strict || h.strict))
            }
            _ => false,
        }
    }

    /// Some point inside a non-empty interval.
    pub fn witness(&self) -> f64 {
        match (self.lo, self.hi) {
            (None, None) => 0.0,
            (Some(l), None) => {
                if l.strict {
                    l.value + 1.0
                } else {
                    l.value
                }
            }
            (None, Some(h)) => {
                if h.strict {
                    h.value - 1.0
                } else {
                    h.value
                }
            }
            (Some(l), Some(h)) => {
                if l.value == h.value {
                    l.value
                } else {
                    let mid = l.value + (h.value - l.value) / 2.0;
                    if mid > l.value && mid < h.value {
                        mid
                    } else if !l.strict {
                        l.value
                    } else {
                        h.value
                    }
                }
            }
        }
    }
}

/// Conjunction of per-variable intervals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cube {
    pub intervals: BTreeMap<String, Interval>,
}

impl Cube {
    fn single(var: String, iv: Interval) -> Cube {
        let mut intervals = BTreeMap::new();
        intervals.insert(var, iv);
        Cube { intervals }
    }

    /// Intersection, or `None` when it is empty.
    fn meet(&self, other: &Cube) -> Option<Cube> {
        let mut out = self.clone();
        for (v, iv) in &other.intervals {
            let merged = match out.intervals.get(v) {
                Some(cur) => cur.intersect(iv),
                None => *iv,
            };
            if merged.is_empty() {
                return None;
            }
            out.intervals.insert(v.clone(), merged);
        }
        Some(out)
    }

    pub fn witness(&self) -> BTreeMap<String, f64> {
        self.intervals
            .iter()
            .map(|(v, iv)| (v.clone(), iv.witness()))
            .collect()
    }
}

fn atom_to_dnf(op: CmpOp, var: String, c: f64) -> Vec<Cube> {
    let b = |strict| Some(Bound { value: c, strict });
    let iv = |lo, hi| Interval { lo, hi };
    match op {
        CmpOp::Ge => vec![Cube::single(var, iv(b(false), None))],
        CmpOp::Gt => vec![Cube::single(var, iv(b(true), None))],
        CmpOp::Le => vec![Cube::single(var, iv(None, b(false)))],
        CmpOp::Lt => vec![Cube::single(var, iv(None, b(true)))],
        CmpOp::Eq => vec![Cube::single(var, iv(b(false), b(false)))],
    }
}

fn negate_op(op: CmpOp) -> Option<CmpOp> {
    match op {
        CmpOp::Ge => Some(CmpOp::Lt),
        CmpOp::Gt => Some(CmpOp::Le),
        CmpOp::Le => Some(CmpOp::Gt),
        CmpOp::Lt => Some(CmpOp::Ge),
        CmpOp::Eq => None,
    }
}

fn product(a: Vec<Cube>, b: &[Cube]) -> Result<Vec<Cube>, LogicError> {
    let mut out = Vec::new();
    for x in &a {
        for y in b {
            if let Some(c) = x.meet(y) {
                out.push(c);
                if out.len() > MAX_CUBES {
                    return Err(LogicError::UnsupportedFragment(
                        "box expansion too large".into(),
                    ));
                }
            }
        }
    }
    Ok(out)
}

/// Union-of-boxes form of `f` (or of `¬f` when `negated`).
pub fn to_dnf(f: &Formula, negated: bool) -> Result<Vec<Cube>, LogicError> {
    match f {
        Formula::Lit(b) => Ok(if *b != negated {
            vec![Cube::default()]
        } else {
            vec![]
        }),
        Formula::BoolVar(v) => Err(LogicError::UnsupportedFragment(format!(
            "boolean symbol '{v}'"
        ))),
        Formula::Cmp(op, l, r) => {
            let unsupported = || LogicError::UnsupportedFragment(format!("non-box comparison {f}"));
            let (lv, la, lb) = l.as_affine().ok_or_else(unsupported)?;
            let (rv, ra, rb) = r.as_affine().ok_or_else(unsupported)?;
            let var = match (lv, rv) {
                (Some(a), Some(b)) if a != b => return Err(unsupported()),
                (Some(a), _) | (None, Some(a)) => Some(a),
                (None, None) => None,
            };
            // (la - ra) * var  op  (rb - lb)
            let coeff = la - ra;
            let rhs = rb - lb;
            let ops: Vec<CmpOp> = if negated {
                match negate_op(*op) {
                    Some(o) => vec![o],
                    None => vec![CmpOp::Lt, CmpOp::Gt],
                }
            } else {
                vec![*op]
            };
            let mut out = Vec::new();
            for o in ops {
                match &var {
                    Some(v) if coeff != 0.0 => {
                        let o = if coeff < 0.0 { o.flipped() } else { o };
                        out.extend(atom_to_dnf(o, v.clone(), rhs / coeff));
                    }
                    _ => {
                        if o.holds(0.0, rhs) {
                            out.push(Cube::default());
                        }
                    }
                }
            }
            Ok(out)
        }
        Formula::Not(g) => to_dnf(g, !negated),
        Formula::And(gs) | Formula::Or(gs) => {
            let conj = matches!(f, Formula::And(_)) != negated;
            if conj {
                let mut acc = vec![Cube::default()];
                for g in gs {
                    let d = to_dnf(g, negated)?;
                    acc = product(acc, &d)?;
                    if acc.is_empty() {
                        break;
                    }
                }
                Ok(acc)
            } else {
                let mut acc = Vec::new();
                for g in gs {
                    acc.extend(to_dnf(g, negated)?);
                    if acc.len() > MAX_CUBES {
                        return Err(LogicError::UnsupportedFragment(
                            "box expansion too large".into(),
                        ));
                    }
                }
                Ok(acc)
            }
        }
        Formula::Iff(a, b) => {
            let pa = to_dnf(a, false)?;
            let na = to_dnf(a, true)?;
            let pb = to_dnf(b, false)?;
            let nb = to_dnf(b, true)?;
            let mut out = if negated {
                product(pa, &nb)?
            } else {
                product(pa, &pb)?
            };
            out.extend(if negated {
                product(na, &pb)?
            } else {
                product(na, &nb)?
            });
            Ok(out)
        }
    }
}

/// True iff the conjunction of `fs` has a model. Formulas outside the box
/// fragment yield `UnsupportedFragment`; callers route those to an SMT solver.
pub fn box_conjunction_satisfiable(fs: &[Formula]) -> Result<bool, LogicError> {
    Ok(box_conjunction_witness(fs)?.is_some())
}

/// Like [`box_conjunction_satisfiable`] but returns a satisfying point.
pub fn box_conjunction_witness(
    fs: &[Formula],
) -> Result<Option<BTreeMap<String, f64>>, LogicError> {
    let mut acc = vec![Cube::default()];
    for f in fs {
        let d = to_dnf(f, false)?;
        acc = product(acc, &d)?;
        if acc.is_empty() {
            return Ok(None);
        }
    }
    Ok(acc.first().map(Cube::witness))
}
