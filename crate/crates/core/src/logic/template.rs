use super::formula::{CmpOp, Formula, Term};

/// A bound or polarity slot: either still a solver symbol or a concrete value.
#[derive(Debug, Clone, PartialEq)]
pub enum Slot<T> {
    Symbolic(String),
    Value(T),
}

/// Box formula template `pos <=> AND_x (x >= lo_x /\ x < hi_x)`, one bound
/// pair per state variable.
///
/// A concrete template with `lo_x >= hi_x` for some `x` is an empty box; its
/// positive form is unsatisfiable and its negated form is valid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxTemplate {
    pub positive: Slot<bool>,
    /// `(variable, lower bound, upper bound)` in signature order.
    pub bounds: Vec<(String, Slot<f64>, Slot<f64>)>,
}

impl BoxTemplate {
    /// Fully symbolic template whose slot names are derived from `prefix`:
    /// `{prefix}_pos`, `{prefix}_{var}_ge`, `{prefix}_{var}_lt`.
    pub fn symbolic(prefix: &str, signature: &[String]) -> BoxTemplate {
        BoxTemplate {
            positive: Slot::Symbolic(format!("{prefix}_pos")),
            bounds: signature
                .iter()
                .map(|v| {
                    (
                        v.clone(),
                        Slot::Symbolic(format!("{prefix}_{v}_ge")),
                        Slot::Symbolic(format!("{prefix}_{v}_lt")),
                    )
                })
                .collect(),
        }
    }

    pub fn concrete(positive: bool, bounds: Vec<(String, f64, f64)>) -> BoxTemplate {
        BoxTemplate {
            positive: Slot::Value(positive),
            bounds: bounds
                .into_iter()
                .map(|(v, lo, hi)| (v, Slot::Value(lo), Slot::Value(hi)))
                .collect(),
        }
    }

    pub fn polarity_symbol(&self) -> Option<&str> {
        match &self.positive {
            Slot::Symbolic(s) => Some(s),
            Slot::Value(_) => None,
        }
    }

    /// Names of all still-symbolic real slots.
    pub fn bound_symbols(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for (_, lo, hi) in &self.bounds {
            for s in [lo, hi] {
                if let Slot::Symbolic(n) = s {
                    out.push(n.as_str());
                }
            }
        }
        out
    }

    fn bound_term(slot: &Slot<f64>) -> Term {
        match slot {
            Slot::Symbolic(s) => Term::Var(s.clone()),
            Slot::Value(v) => Term::Const(*v),
        }
    }

    /// The box body `AND_x (x >= lo_x /\ x < hi_x)`.
    pub fn body(&self) -> Formula {
        let mut parts = Vec::with_capacity(self.bounds.len() * 2);
        for (v, lo, hi) in &self.bounds {
            parts.push(Formula::Cmp(
                CmpOp::Ge,
                Term::var(v.as_str()),
                Self::bound_term(lo),
            ));
            parts.push(Formula::Cmp(
                CmpOp::Lt,
                Term::var(v.as_str()),
                Self::bound_term(hi),
            ));
        }
        Formula::And(parts)
    }

    /// `pos <=> body`. A concrete polarity yields the body or its negation.
    pub fn to_formula(&self) -> Formula {
        match &self.positive {
            Slot::Symbolic(s) => Formula::iff(Formula::BoolVar(s.clone()), self.body()),
            Slot::Value(true) => self.body(),
            Slot::Value(false) => Formula::not(self.body()),
        }
    }

    /// Fills slots from a lookup; missing symbols stay symbolic.
    pub fn concretize(
        &self,
        lookup_bool: impl Fn(&str) -> Option<bool>,
        lookup_real: impl Fn(&str) -> Option<f64>,
    ) -> BoxTemplate {
        let fill = |s: &Slot<f64>| match s {
            Slot::Symbolic(n) => match lookup_real(n) {
                Some(v) => Slot::Value(v),
                None => s.clone(),
            },
            v => v.clone(),
        };
        BoxTemplate {
            positive: match &self.positive {
                Slot::Symbolic(n) => match lookup_bool(n) {
                    Some(b) => Slot::Value(b),
                    None => self.positive.clone(),
                },
                v => v.clone(),
            },
            bounds: self
                .bounds
                .iter()
                .map(|(v, lo, hi)| (v.clone(), fill(lo), fill(hi)))
                .collect(),
        }
    }

    pub fn is_concrete(&self) -> bool {
        matches!(self.positive, Slot::Value(_))
            && self
                .bounds
                .iter()
                .all(|(_, lo, hi)| matches!((lo, hi), (Slot::Value(_), Slot::Value(_))))
    }

    /// True when some concrete bound pair is empty (`lo >= hi`).
    pub fn is_empty_box(&self) -> bool {
        self.bounds.iter().any(|(_, lo, hi)| match (lo, hi) {
            (Slot::Value(l), Slot::Value(h)) => l >= h,
            _ => false,
        })
    }
}

/// Guard built from a template set: template `i` holds and every other
/// template fails. Guards built this way from one set are pairwise disjoint.
pub fn exclusive_guard(templates: &[Formula], i: usize) -> Formula {
    let mut parts = Vec::with_capacity(templates.len());
    parts.push(templates[i].clone());
    for (j, t) in templates.iter().enumerate() {
        if j != i {
            parts.push(Formula::not(t.clone()));
        }
    }
    Formula::And(parts)
}
