//! Relational planning domains.
//!
//! A domain declares predicates, an optional constant pool, a discount, a
//! reward diagram and a set of stochastic actions. Each action is a
//! distribution over deterministic alternatives; each alternative describes
//! the next-state truth of every predicate with a truth-value diagram (TVD).
//! Predicates without an explicit TVD keep their current truth (frame TVD).
//!
//! The on-disk format is parsed by [`parse::parse_domain`] and printed by
//! [`print::print_domain`]; parse-print-parse is a fixed point.

pub mod parse;
pub mod print;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::eval::Vocabulary;
use crate::label::Label;
use crate::store::{Node, NodeId, Store};
use crate::term::Term;
use crate::value::Value;
use crate::{FoddError, DEFAULT_ATOM_BUDGET};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PredicateDecl {
    pub name: String,
    pub arity: usize,
}

/// Truth-value diagram: for one action alternative and one predicate, a
/// {0,1}-leaved diagram giving the predicate's truth after the action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tvd {
    pub action: String,
    pub alternative: String,
    pub predicate: String,
    pub pred_params: Vec<String>,
    pub action_params: Vec<String>,
    pub diagram: NodeId,
}

impl Tvd {
    /// Substitutes predicate parameters by `atom_args` and action parameters
    /// by `action_args`, simultaneously, and re-canonicalizes.
    pub fn instantiate(
        &self,
        store: &mut Store,
        atom_args: &[Term],
        action_args: &[Term],
    ) -> Result<NodeId, DomainError> {
        if atom_args.len() != self.pred_params.len() {
            return Err(DomainError::ArityMismatch {
                name: self.predicate.clone(),
                expected: self.pred_params.len(),
                got: atom_args.len(),
                line: 0,
                col: 0,
            });
        }
        if action_args.len() != self.action_params.len() {
            return Err(DomainError::ArityMismatch {
                name: self.action.clone(),
                expected: self.action_params.len(),
                got: action_args.len(),
                line: 0,
                col: 0,
            });
        }
        let mut subst = BTreeMap::new();
        for (p, t) in self.pred_params.iter().zip(atom_args) {
            subst.insert(p.clone(), t.clone());
        }
        for (p, t) in self.action_params.iter().zip(action_args) {
            subst.insert(p.clone(), t.clone());
        }
        // A TVD has no variables beyond its parameters, so the simultaneous
        // substitution is total and cannot capture.
        store
            .substitute(self.diagram, &subst)
            .map_err(DomainError::Kernel)
    }
}

/// The frame TVD for a predicate: next-state truth equals current truth.
pub fn frame_tvd(
    store: &mut Store,
    pred: &PredicateDecl,
    action: &str,
    alternative: &str,
    action_params: &[String],
) -> Tvd {
    let params: Vec<String> = (1..=pred.arity).map(|i| format!("x{i}")).collect();
    let args: Vec<Term> = params.iter().map(Term::var).collect();
    let one = store.mk_leaf(Value::one());
    let zero = store.zero_leaf();
    let diagram = store
        .mk_node(Label::atom(pred.name.clone(), args), one, zero)
        .expect("leaves admit any label");
    Tvd {
        action: action.to_string(),
        alternative: alternative.to_string(),
        predicate: pred.name.clone(),
        pred_params: params,
        action_params: action_params.to_vec(),
        diagram,
    }
}

/// One deterministic alternative of a stochastic action. `tvds` holds only
/// the predicates the alternative affects; the rest default to frame TVDs.
#[derive(Clone, Debug)]
pub struct Alternative {
    pub name: String,
    pub prob: NodeId,
    pub tvds: BTreeMap<String, Tvd>,
}

#[derive(Clone, Debug)]
pub struct ActionModel {
    pub name: String,
    pub params: Vec<String>,
    pub alternatives: Vec<Alternative>,
}

impl ActionModel {
    /// A no-change action: one certain alternative with no explicit effects.
    pub fn is_noop(&self, store: &Store) -> bool {
        self.alternatives.len() == 1 && {
            let alt = &self.alternatives[0];
            alt.tvds.is_empty()
                && matches!(
                    store.node(alt.prob),
                    Node::Leaf(l) if l.value == Value::one() && l.tag.is_none()
                )
        }
    }

    /// The TVD for `pred` under `alternative`, defaulting to the frame TVD.
    pub fn tvd_for(
        &self,
        store: &mut Store,
        alternative: usize,
        pred: &PredicateDecl,
    ) -> Tvd {
        let alt = &self.alternatives[alternative];
        match alt.tvds.get(&pred.name) {
            Some(t) => t.clone(),
            None => frame_tvd(store, pred, &self.name, &alt.name, &self.params),
        }
    }
}

/// A parsed and validated planning domain.
#[derive(Clone, Debug)]
pub struct DomainSpec {
    pub name: String,
    pub predicates: Vec<PredicateDecl>,
    pub constants: Vec<String>,
    pub discount: Value,
    pub absorbing_goal: bool,
    pub reward: NodeId,
    pub actions: Vec<ActionModel>,
}

impl DomainSpec {
    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionModel> {
        self.actions.iter().find(|a| a.name == name)
    }

    /// The declared no-change action, when present.
    pub fn noop_action(&self, store: &Store) -> Option<&ActionModel> {
        self.actions.iter().find(|a| a.is_noop(store))
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary {
            predicates: self
                .predicates
                .iter()
                .map(|p| (p.name.clone(), p.arity))
                .collect(),
            constants: self.constants.clone(),
        }
    }

    /// Structural validation plus probability normalization by enumeration.
    /// Normalization is checked on universe sizes 1 and 2, skipping a size
    /// when the vocabulary exceeds the atom budget (size 1 must always fit).
    pub fn validate(&self, store: &mut Store) -> Result<(), DomainError> {
        let mut seen = BTreeSet::new();
        for p in &self.predicates {
            if !seen.insert(p.name.clone()) {
                return Err(DomainError::DuplicatePredicate {
                    name: p.name.clone(),
                });
            }
        }
        let mut seen = BTreeSet::new();
        for c in &self.constants {
            if !seen.insert(c.clone()) {
                return Err(DomainError::DuplicateConstant { name: c.clone() });
            }
        }
        let zero = Value::zero();
        let one = Value::one();
        if self.discount <= zero || self.discount >= one {
            return Err(DomainError::BadDiscount {
                value: self.discount.to_decimal_string(),
            });
        }
        self.check_diagram_atoms(store, self.reward)?;
        if self.absorbing_goal {
            let nonzero: Vec<NodeId> = store
                .leaves(self.reward)
                .into_iter()
                .filter(|&l| !store.leaf(l).unwrap().value.is_zero())
                .collect();
            if nonzero.len() != 1 {
                return Err(DomainError::AbsorbingReward {
                    nonzero_leaves: nonzero.len(),
                });
            }
            if store.leaf(nonzero[0]).unwrap().value.is_negative() {
                return Err(DomainError::AbsorbingReward { nonzero_leaves: 0 });
            }
        }
        let mut action_names = BTreeSet::new();
        for action in &self.actions {
            if !action_names.insert(action.name.clone()) {
                return Err(DomainError::DuplicateAction {
                    name: action.name.clone(),
                });
            }
            let param_set: BTreeSet<&String> = action.params.iter().collect();
            if param_set.len() != action.params.len() {
                return Err(DomainError::DuplicateParameter {
                    action: action.name.clone(),
                });
            }
            for alt in &action.alternatives {
                self.check_diagram_atoms(store, alt.prob)?;
                for v in store.vars(alt.prob) {
                    if !action.params.contains(&v) {
                        return Err(DomainError::ProbabilityVariable {
                            action: action.name.clone(),
                            alternative: alt.name.clone(),
                            var: v,
                        });
                    }
                }
                for tvd in alt.tvds.values() {
                    self.check_tvd(store, action, tvd)?;
                }
            }
        }
        self.check_probability_normalization(store)?;
        Ok(())
    }

    fn check_tvd(
        &self,
        store: &mut Store,
        action: &ActionModel,
        tvd: &Tvd,
    ) -> Result<(), DomainError> {
        let pred = self
            .predicate(&tvd.predicate)
            .ok_or_else(|| DomainError::UnknownPredicate {
                name: tvd.predicate.clone(),
                line: 0,
                col: 0,
            })?;
        if tvd.pred_params.len() != pred.arity {
            return Err(DomainError::ArityMismatch {
                name: pred.name.clone(),
                expected: pred.arity,
                got: tvd.pred_params.len(),
                line: 0,
                col: 0,
            });
        }
        for p in &tvd.pred_params {
            if action.params.contains(p) {
                return Err(DomainError::TvdParameterClash {
                    action: action.name.clone(),
                    predicate: tvd.predicate.clone(),
                    var: p.clone(),
                });
            }
        }
        self.check_diagram_atoms(store, tvd.diagram)?;
        for leaf in store.leaves(tvd.diagram) {
            let v = &store.leaf(leaf).unwrap().value;
            if !v.is_zero() && *v != Value::one() {
                return Err(DomainError::TvdLeaf {
                    action: action.name.clone(),
                    predicate: tvd.predicate.clone(),
                    value: v.to_decimal_string(),
                });
            }
        }
        let allowed: BTreeSet<&String> = tvd
            .pred_params
            .iter()
            .chain(action.params.iter())
            .collect();
        for v in store.vars(tvd.diagram) {
            if !allowed.contains(&v) {
                return Err(DomainError::TvdVariable {
                    action: action.name.clone(),
                    predicate: tvd.predicate.clone(),
                    var: v,
                });
            }
        }
        Ok(())
    }

    fn check_diagram_atoms(&self, store: &Store, d: NodeId) -> Result<(), DomainError> {
        for id in store.reachable(d) {
            if let Node::Inner { label, .. } = store.node(id) {
                if let Label::Atom { pred, args } = label {
                    match self.predicate(pred) {
                        None => {
                            return Err(DomainError::UnknownPredicate {
                                name: pred.clone(),
                                line: 0,
                                col: 0,
                            })
                        }
                        Some(decl) if decl.arity != args.len() => {
                            return Err(DomainError::ArityMismatch {
                                name: pred.clone(),
                                expected: decl.arity,
                                got: args.len(),
                                line: 0,
                                col: 0,
                            })
                        }
                        Some(_) => {}
                    }
                }
                for t in label.terms() {
                    if let Term::Const(c) = t {
                        if !self.constants.contains(c) {
                            return Err(DomainError::UnknownConstant { name: c.clone() });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn check_probability_normalization(&self, store: &mut Store) -> Result<(), DomainError> {
        let vocab = self.vocabulary();
        for n in [1u32, 2] {
            let interps = match vocab.interpretations(n, DEFAULT_ATOM_BUDGET) {
                Ok(is) => is,
                Err(FoddError::BudgetExceeded { atoms, budget }) if n > 1 => {
                    let _ = (atoms, budget);
                    break;
                }
                Err(e) => return Err(DomainError::Kernel(e)),
            };
            for action in &self.actions {
                for binding in crate::eval::tuples(n, action.params.len()) {
                    let mut z = crate::eval::Valuation::new();
                    for (p, o) in action.params.iter().zip(&binding) {
                        z.insert(p.clone(), *o);
                    }
                    for i in &interps {
                        let mut total = Value::zero();
                        for alt in &action.alternatives {
                            let p = store
                                .evaluate(alt.prob, i, &z)
                                .map_err(DomainError::Kernel)?;
                            if p.is_negative() {
                                return Err(DomainError::ProbabilityNotNormalized {
                                    action: action.name.clone(),
                                    detail: format!(
                                        "alternative `{}` has probability {} on {}",
                                        alt.name,
                                        p.to_decimal_string(),
                                        i.describe()
                                    ),
                                });
                            }
                            total = total + p;
                        }
                        if total != Value::one() {
                            return Err(DomainError::ProbabilityNotNormalized {
                                action: action.name.clone(),
                                detail: format!(
                                    "probabilities sum to {} on {}",
                                    total.to_decimal_string(),
                                    i.describe()
                                ),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parse and validation diagnostics.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("line {line}, column {col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("line {line}, column {col}: unknown predicate `{name}`")]
    UnknownPredicate { name: String, line: usize, col: usize },
    #[error("line {line}, column {col}: `{name}` expects {expected} arguments, got {got}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
        line: usize,
        col: usize,
    },
    #[error("duplicate predicate `{name}`")]
    DuplicatePredicate { name: String },
    #[error("duplicate constant `{name}`")]
    DuplicateConstant { name: String },
    #[error("duplicate action `{name}`")]
    DuplicateAction { name: String },
    #[error("action `{action}` repeats a parameter name")]
    DuplicateParameter { action: String },
    #[error("unknown constant `{name}` (constants must be declared or quoted)")]
    UnknownConstant { name: String },
    #[error("discount must lie strictly between 0 and 1, got {value}")]
    BadDiscount { value: String },
    #[error(
        "absorbing-goal domains need exactly one positive reward leaf, found {nonzero_leaves} non-zero leaves"
    )]
    AbsorbingReward { nonzero_leaves: usize },
    #[error(
        "TVD for `{predicate}` under action `{action}` uses variable `{var}`, which is neither an action parameter nor a predicate parameter"
    )]
    TvdVariable {
        action: String,
        predicate: String,
        var: String,
    },
    #[error(
        "TVD for `{predicate}` under action `{action}` reuses action parameter `{var}` as a predicate parameter"
    )]
    TvdParameterClash {
        action: String,
        predicate: String,
        var: String,
    },
    #[error("TVD for `{predicate}` under action `{action}` has leaf {value}; TVD leaves must be 0 or 1")]
    TvdLeaf {
        action: String,
        predicate: String,
        value: String,
    },
    #[error(
        "probability diagram of `{action}`/`{alternative}` uses variable `{var}`; probabilities may depend only on action parameters"
    )]
    ProbabilityVariable {
        action: String,
        alternative: String,
        var: String,
    },
    #[error("probabilities of action `{action}` do not form a distribution: {detail}")]
    ProbabilityNotNormalized { action: String, detail: String },
    #[error("solving requires a no-change action (one certain alternative with no effects)")]
    MissingNoop,
    #[error("policy leaf with value {value} carries no action tag")]
    UntaggedPolicyLeaf { value: String },
    #[error(transparent)]
    Kernel(#[from] FoddError),
}
