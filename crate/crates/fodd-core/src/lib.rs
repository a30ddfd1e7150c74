//! First-order decision diagrams (FODDs) and symbolic solvers for relational
//! MDPs.
//!
//! The crate is organized around a hash-consed diagram kernel ([`store`],
//! [`label`], [`eval`], [`reduce`]), a planning-domain model with a textual
//! format ([`domain`]), symbolic regression and greedy backups
//! ([`regression`]), annotated policy diagrams ([`policy`]), the iteration
//! drivers ([`solver`]) and an exact ground-MDP oracle ([`oracle`]) used to
//! cross-check every symbolic artifact on small universes.

pub mod checks;
pub mod domain;
pub mod dot;
pub mod eval;
pub mod label;
pub mod oracle;
pub mod policy;
pub mod reduce;
pub mod regression;
pub mod solver;
pub mod store;
pub mod term;
pub mod value;

pub use eval::{Interpretation, Obj, Valuation, Vocabulary};
pub use label::Label;
pub use store::{Leaf, Node, NodeId, OpKind, Store};
pub use term::{ActionTag, Term};
pub use value::Value;

use thiserror::Error;

/// Default cap on the number of ground atoms enumeration-based checks are
/// willing to expand (2^atoms interpretations). Overridable per call site.
pub const DEFAULT_ATOM_BUDGET: usize = 12;

/// Errors raised by the diagram kernel.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FoddError {
    #[error("label `{parent}` must precede child label `{child}` in the global order")]
    OrderingViolation { parent: String, child: String },
    #[error("substitution target `{var}` already occurs free in the diagram")]
    Capture { var: String },
    #[error("variable `{0}` is not bound by the valuation")]
    UnboundVariable(String),
    #[error("constant `{0}` is not mapped by the interpretation")]
    UnmappedConstant(String),
    #[error("cannot aggregate over an empty universe ({vars} free variables)")]
    EmptyUniverse { vars: usize },
    #[error("enumeration refused: {atoms} ground atoms exceed the budget of {budget}")]
    BudgetExceeded { atoms: usize, budget: usize },
}
