//! Node labels and the global label order.

use std::collections::BTreeMap;
use std::fmt;

use crate::term::Term;

/// An inner-node label: a predicate atom or an equality between two terms.
///
/// Equalities are stored with their smaller term (under the term order) on the
/// left; `mk_equality` normalizes the orientation so that `x = y` and `y = x`
/// intern to the same label.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Atom { pred: String, args: Vec<Term> },
    Equality(Term, Term),
}

impl Label {
    pub fn atom(pred: impl Into<String>, args: Vec<Term>) -> Label {
        Label::Atom {
            pred: pred.into(),
            args,
        }
    }

    pub fn equality(a: Term, b: Term) -> Label {
        if a <= b {
            Label::Equality(a, b)
        } else {
            Label::Equality(b, a)
        }
    }

    pub fn is_equality(&self) -> bool {
        matches!(self, Label::Equality(_, _))
    }

    /// Variables occurring in the label, in occurrence order.
    pub fn vars(&self) -> Vec<&str> {
        self.terms().into_iter().filter_map(|t| t.as_var()).collect()
    }

    pub fn terms(&self) -> Vec<&Term> {
        match self {
            Label::Atom { args, .. } => args.iter().collect(),
            Label::Equality(a, b) => vec![a, b],
        }
    }

    /// Applies a simultaneous substitution, re-normalizing equality
    /// orientation.
    pub fn apply(&self, subst: &BTreeMap<String, Term>) -> Label {
        match self {
            Label::Atom { pred, args } => Label::Atom {
                pred: pred.clone(),
                args: args.iter().map(|t| t.apply(subst)).collect(),
            },
            Label::Equality(a, b) => Label::equality(a.apply(subst), b.apply(subst)),
        }
    }
}

/// The global label order: all atoms precede all equalities; atoms compare
/// by (predicate name, arity, argument tuple) and equalities by
/// (left, right). Any fixed total order preserves correctness; this one is
/// pinned so that construction and exports are deterministic.
impl Ord for Label {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self, other) {
            (Label::Atom { pred: p1, args: a1 }, Label::Atom { pred: p2, args: a2 }) => p1
                .cmp(p2)
                .then_with(|| a1.len().cmp(&a2.len()))
                .then_with(|| a1.cmp(a2)),
            (Label::Atom { .. }, Label::Equality(_, _)) => Ordering::Less,
            (Label::Equality(_, _), Label::Atom { .. }) => Ordering::Greater,
            (Label::Equality(l1, r1), Label::Equality(l2, r2)) => {
                l1.cmp(l2).then_with(|| r1.cmp(r2))
            }
        }
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Atom { pred, args } => {
                write!(f, "{pred}(")?;
                for (i, t) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
            Label::Equality(a, b) => write!(f, "{a} = {b}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(pred: &str, args: &[Term]) -> Label {
        Label::atom(pred, args.to_vec())
    }

    #[test]
    fn atoms_precede_equalities() {
        let atom = a("zz", &[Term::var("x")]);
        let eq = Label::equality(Term::var("a"), Term::var("b"));
        assert!(atom < eq);
    }

    #[test]
    fn atom_order_is_pred_then_arity_then_args() {
        let p_x = a("p", &[Term::var("x")]);
        let p_y = a("p", &[Term::var("y")]);
        let q_x = a("q", &[Term::var("x")]);
        let p2 = a("p", &[Term::var("x"), Term::var("y")]);
        assert!(p_x < p_y);
        assert!(p_y < q_x);
        assert!(p_x < p2);
        assert!(p2 < q_x);
        // Variables come before constants in argument position.
        let p_c = a("p", &[Term::constant("c")]);
        assert!(p_y < p_c);
    }

    #[test]
    fn equality_orientation_is_normalized() {
        let e1 = Label::equality(Term::var("y"), Term::var("x"));
        let e2 = Label::equality(Term::var("x"), Term::var("y"));
        assert_eq!(e1, e2);
        match e1 {
            Label::Equality(l, r) => {
                assert_eq!(l, Term::var("x"));
                assert_eq!(r, Term::var("y"));
            }
            _ => unreachable!(),
        }
    }
}
