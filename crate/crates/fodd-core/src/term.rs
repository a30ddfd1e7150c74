//! Terms and action tags.

use std::collections::BTreeMap;
use std::fmt;

/// A term is either a variable or a constant. The two namespaces are disjoint:
/// the parser produces variables for plain lower-case identifiers and
/// constants only for declared or quoted names, and programmatic constructors
/// keep the distinction in the enum itself.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn constant(name: impl Into<String>) -> Term {
        Term::Const(name.into())
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Var(n) | Term::Const(n) => n,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(n) => Some(n),
            Term::Const(_) => None,
        }
    }

    /// Applies a simultaneous substitution to this term.
    pub fn apply(&self, subst: &BTreeMap<String, Term>) -> Term {
        match self {
            Term::Var(n) => subst.get(n).cloned().unwrap_or_else(|| self.clone()),
            Term::Const(_) => self.clone(),
        }
    }
}

/// Total order on terms: variables before constants, then by name. This is the
/// order used inside the global label order, so it must stay fixed.
impl Ord for Term {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self, other) {
            (Term::Var(a), Term::Var(b)) => a.cmp(b),
            (Term::Const(a), Term::Const(b)) => a.cmp(b),
            (Term::Var(_), Term::Const(_)) => std::cmp::Ordering::Less,
            (Term::Const(_), Term::Var(_)) => std::cmp::Ordering::Greater,
        }
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// A parameterized action attached to a policy leaf, e.g. `A2(x)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionTag {
    pub action: String,
    pub args: Vec<Term>,
}

impl ActionTag {
    pub fn new(action: impl Into<String>, args: Vec<Term>) -> ActionTag {
        ActionTag {
            action: action.into(),
            args,
        }
    }

    pub fn apply(&self, subst: &BTreeMap<String, Term>) -> ActionTag {
        ActionTag {
            action: self.action.clone(),
            args: self.args.iter().map(|t| t.apply(subst)).collect(),
        }
    }
}

impl fmt::Display for ActionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.action)?;
        for (i, t) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, ")")
    }
}
