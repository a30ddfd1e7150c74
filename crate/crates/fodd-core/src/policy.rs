//! Policy diagrams and policy regression.
//!
//! A policy diagram is a value diagram whose every leaf carries an action
//! annotation. Evaluating it on a state under max aggregation yields both
//! the value and, through the maximizing leaf and valuation, a ground
//! action. Multiple bindings can reach the maximum; the selection rule here
//! is fixed (smallest leaf id, then the earliest valuation in the
//! aggregation's enumeration order) so that induced ground policies are
//! well defined and repeatable.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::domain::{DomainError, DomainSpec};
use crate::eval::{Interpretation, Obj};
use crate::oracle::GroundMdp;
use crate::regression::{q_function, QDiagram};
use crate::store::{Node, NodeId, OpKind, Store};
use crate::term::Term;
use crate::value::Value;
use crate::FoddError;

/// A fully instantiated action.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroundAction {
    pub action: String,
    pub args: Vec<Obj>,
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.args.iter().map(|o| o.to_string()).collect();
        write!(f, "{}({})", self.action, args.join(", "))
    }
}

/// A value diagram with action-annotated leaves, plus the generation index
/// of the iterate that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyDiagram {
    pub root: NodeId,
    pub generation: u32,
}

/// Picks the ground action a policy prescribes in a state: the maximizing
/// leaf's tag instantiated by the maximizing valuation, together with the
/// achieved value.
pub fn select_action(
    store: &Store,
    p: &PolicyDiagram,
    s: &Interpretation,
) -> Result<(GroundAction, Value), DomainError> {
    let (value, leaf_id, valuation) = store.map_best(p.root, s).map_err(DomainError::Kernel)?;
    let leaf = store.leaf(leaf_id).expect("map_best returns a leaf");
    let tag = leaf
        .tag
        .as_ref()
        .ok_or_else(|| DomainError::UntaggedPolicyLeaf {
            value: leaf.value.to_decimal_string(),
        })?;
    let mut args = Vec::with_capacity(tag.args.len());
    for t in &tag.args {
        match t {
            Term::Var(v) => {
                let obj = valuation
                    .get(v)
                    .copied()
                    .ok_or_else(|| DomainError::Kernel(FoddError::UnboundVariable(v.clone())))?;
                args.push(obj);
            }
            Term::Const(c) => {
                let obj = s
                    .constants
                    .get(c)
                    .copied()
                    .ok_or_else(|| DomainError::Kernel(FoddError::UnmappedConstant(c.clone())))?;
                args.push(obj);
            }
        }
    }
    Ok((
        GroundAction {
            action: tag.action.clone(),
            args,
        },
        value,
    ))
}

/// One step of policy regression (with embedded improvement): every leaf of
/// the policy is replaced by the Q-function of its annotated action, with
/// the action parameters bound to the leaf's arguments. Computed by leaf
/// indicators: multiply the 0/1 indicator of each leaf with the bound
/// Q-function and sum in leaf-id order. The result is returned as the next
/// value function and, with the tags the Q-leaves carry, as the next policy.
pub fn rel_regress_policy(
    store: &mut Store,
    w: NodeId,
    p: &PolicyDiagram,
    spec: &DomainSpec,
) -> Result<(NodeId, PolicyDiagram), DomainError> {
    assert_eq!(
        w, p.root,
        "value and policy must be the two views of the same diagram"
    );
    let mut q_cache: HashMap<String, QDiagram> = HashMap::new();
    let leaf_ids = store.leaves(p.root);
    let mut terms = Vec::with_capacity(leaf_ids.len());
    for leaf_id in leaf_ids {
        let leaf = store.leaf(leaf_id).expect("leaf").clone();
        let tag = leaf
            .tag
            .as_ref()
            .ok_or_else(|| DomainError::UntaggedPolicyLeaf {
                value: leaf.value.to_decimal_string(),
            })?;
        let q = match q_cache.get(&tag.action) {
            Some(q) => q.clone(),
            None => {
                let action = spec
                    .action(&tag.action)
                    .ok_or_else(|| DomainError::Parse {
                        line: 0,
                        col: 0,
                        message: format!("policy mentions unknown action `{}`", tag.action),
                    })?
                    .clone();
                let q = q_function(store, w, &action, spec)?;
                q_cache.insert(tag.action.clone(), q.clone());
                q
            }
        };
        if q.params.len() != tag.args.len() {
            return Err(DomainError::ArityMismatch {
                name: tag.action.clone(),
                expected: q.params.len(),
                got: tag.args.len(),
                line: 0,
                col: 0,
            });
        }
        // Standardize the Q-function apart from the policy except for the
        // shared action arguments, then bind its parameters to the leaf's.
        let reserved: BTreeSet<String> = q.params.iter().cloned().collect();
        let fresh_q = store.standardize_apart(q.diagram, &reserved);
        let mut bind = BTreeMap::new();
        for (param, arg) in q.params.iter().zip(&tag.args) {
            bind.insert(param.clone(), arg.clone());
        }
        let bound = store.substitute(fresh_q, &bind).map_err(DomainError::Kernel)?;
        let indicator = indicator(store, p.root, leaf_id);
        terms.push(store.apply(OpKind::Mul, indicator, bound));
    }
    // For a fixed total valuation exactly one indicator is 1, so the terms
    // have disjoint support. With nonnegative leaves their sum therefore
    // equals their pointwise max, and a max may share variables across
    // operands (max aggregation commutes with max), which keeps the
    // combination near the size of the largest term. With negative leaves
    // the sum form with disjoint variables is used instead.
    let nonneg = terms
        .iter()
        .all(|&t| !store.min_leaf(t).is_negative());
    let mut acc: Option<NodeId> = None;
    for term in terms {
        acc = Some(match (acc, nonneg) {
            (None, true) => {
                let t = store.reduce(term);
                store.canonical_rename(t)
            }
            (None, false) => term,
            (Some(a), true) => {
                let t = store.reduce(term);
                let aligned = store.canonical_rename(t);
                let folded = store.apply(OpKind::Max, a, aligned);
                store.reduce(folded)
            }
            (Some(a), false) => store.apply(OpKind::Add, a, term),
        });
    }
    let acc = acc.ok_or(DomainError::UntaggedPolicyLeaf {
        value: "<empty policy>".to_string(),
    })?;
    let reduced = store.reduce(acc);
    let noop = spec.noop_action(store).ok_or(DomainError::MissingNoop)?;
    let noop_tag = crate::term::ActionTag::new(noop.name.clone(), Vec::new());
    let result = store.retag_untagged_leaves(reduced, &noop_tag);
    Ok((
        result,
        PolicyDiagram {
            root: result,
            generation: p.generation + 1,
        },
    ))
}

/// The 0/1 diagram selecting exactly one leaf node of `d`.
pub fn indicator(store: &mut Store, d: NodeId, target: NodeId) -> NodeId {
    let mut memo = HashMap::new();
    indicator_rec(store, d, target, &mut memo)
}

fn indicator_rec(
    store: &mut Store,
    d: NodeId,
    target: NodeId,
    memo: &mut HashMap<NodeId, NodeId>,
) -> NodeId {
    if let Some(&r) = memo.get(&d) {
        return r;
    }
    let r = match store.node(d).clone() {
        Node::Leaf(_) => {
            if d == target {
                store.mk_leaf(Value::one())
            } else {
                store.zero_leaf()
            }
        }
        Node::Inner { label, hi, lo } => {
            let h = indicator_rec(store, hi, target, memo);
            let l = indicator_rec(store, lo, target, memo);
            store.branch(label, h, l)
        }
    };
    memo.insert(d, r);
    r
}

/// The ground action the policy induces in every state of `m`.
pub fn induced_ground_policy(
    store: &Store,
    p: &PolicyDiagram,
    m: &GroundMdp,
) -> Result<Vec<usize>, DomainError> {
    let mut choice = Vec::with_capacity(m.state_count());
    for s in &m.states {
        let (action, _) = select_action(store, p, s)?;
        let idx = m.action_index(&action).ok_or_else(|| DomainError::Parse {
            line: 0,
            col: 0,
            message: format!("policy selected unknown ground action {action}"),
        })?;
        choice.push(idx);
    }
    Ok(choice)
}

/// Exact value of the stationary ground policy induced by
/// [`select_action`], via iterative policy evaluation on the ground MDP.
pub fn policy_value_oracle(
    store: &Store,
    p: &PolicyDiagram,
    m: &GroundMdp,
    tol: f64,
) -> Result<Vec<f64>, DomainError> {
    let choice = induced_ground_policy(store, p, m)?;
    Ok(m.evaluate_policy(&choice, tol))
}

/// One fixed-policy backup of `terminal` through `p` on the ground MDP.
pub fn policy_backup_once(
    store: &Store,
    p: &PolicyDiagram,
    m: &GroundMdp,
    terminal: &[f64],
) -> Result<Vec<f64>, DomainError> {
    let choice = induced_ground_policy(store, p, m)?;
    Ok((0..m.state_count())
        .map(|s| m.backup(s, choice[s], terminal))
        .collect())
}

/// One rule of the decision-list view of a policy.
#[derive(Clone, Debug)]
pub struct DecisionRule {
    pub condition: String,
    pub value: Value,
    pub action: Option<String>,
}

/// The policy printed as value-ordered rules, one per root-to-leaf path.
pub fn decision_list(store: &Store, root: NodeId) -> Vec<DecisionRule> {
    let mut rules = Vec::new();
    let mut literals = Vec::new();
    collect_rules(store, root, &mut literals, &mut rules);
    rules.sort_by(|a, b| b.value.cmp(&a.value));
    rules
}

fn collect_rules(
    store: &Store,
    d: NodeId,
    literals: &mut Vec<String>,
    rules: &mut Vec<DecisionRule>,
) {
    match store.node(d) {
        Node::Leaf(leaf) => {
            let condition = if literals.is_empty() {
                "true".to_string()
            } else {
                literals.join(" ∧ ")
            };
            rules.push(DecisionRule {
                condition,
                value: leaf.value.clone(),
                action: leaf.tag.as_ref().map(|t| t.to_string()),
            });
        }
        Node::Inner { label, hi, lo } => {
            literals.push(label.to_string());
            collect_rules(store, *hi, literals, rules);
            literals.pop();
            literals.push(format!("¬{label}"));
            collect_rules(store, *lo, literals, rules);
            literals.pop();
        }
    }
}

/// Renders a decision list as text, one rule per line.
pub fn decision_list_text(rules: &[DecisionRule]) -> String {
    let mut out = String::new();
    for rule in rules {
        let action = rule
            .action
            .as_deref()
            .unwrap_or("-");
        out.push_str(&format!(
            "{} -> {} ({})\n",
            rule.condition,
            rule.value.to_decimal_string(),
            action
        ));
    }
    out
}
