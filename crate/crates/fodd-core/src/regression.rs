//! Symbolic regression of value functions through action alternatives,
//! object maximization and the greedy backup.
//!
//! Regressing a value diagram `v` through a deterministic alternative
//! replaces each state test by the test's truth-value diagram. The default
//! route combines bottom-up (`T (x) H (+) (1-T) (x) L` per node); the naive
//! block-replacement route exists as an independent cross-check. A
//! Q-function then discounts the probability-weighted sum of regressed
//! alternatives and folds in the reward; in absorbing-goal domains the
//! reward is combined by max instead of addition, capping goal values at
//! the reward itself.
//!
//! Variable discipline: the incoming value function and the reward are
//! standardized apart per summand; only the action parameters are shared
//! between probability diagrams, TVD instantiations and the resulting
//! Q-diagram, whose leaves carry the action schema as a tag.

use std::collections::{BTreeSet, HashMap};

use crate::domain::{ActionModel, DomainError, DomainSpec};
use crate::label::Label;
use crate::policy::PolicyDiagram;
use crate::store::{Node, NodeId, OpKind, Store};
use crate::term::{ActionTag, Term};
use crate::value::Value;

/// A parameterized Q-function: the value of performing `action` with free
/// parameters `params` and then receiving the source value function. Leaves
/// are tagged `action(params)`.
#[derive(Clone, Debug)]
pub struct QDiagram {
    pub action: String,
    pub params: Vec<String>,
    pub diagram: NodeId,
}

/// Regression through one deterministic alternative by bottom-up block
/// combination. Equality labels are state-independent and pass through.
pub fn regress_deterministic(
    store: &mut Store,
    v: NodeId,
    action: &ActionModel,
    alternative: usize,
    spec: &DomainSpec,
) -> Result<NodeId, DomainError> {
    let mut memo = HashMap::new();
    regress_rec(store, v, action, alternative, spec, &mut memo)
}

fn regress_rec(
    store: &mut Store,
    d: NodeId,
    action: &ActionModel,
    alternative: usize,
    spec: &DomainSpec,
    memo: &mut HashMap<NodeId, NodeId>,
) -> Result<NodeId, DomainError> {
    if let Some(&r) = memo.get(&d) {
        return Ok(r);
    }
    let r = match store.node(d).clone() {
        Node::Leaf(_) => d,
        Node::Inner { label, hi, lo } => {
            let h = regress_rec(store, hi, action, alternative, spec, memo)?;
            let l = regress_rec(store, lo, action, alternative, spec, memo)?;
            match &label {
                Label::Equality(_, _) => store.branch(label.clone(), h, l),
                Label::Atom { pred, args } => {
                    let t = instantiated_tvd(store, action, alternative, spec, pred, args)?;
                    let one = store.mk_leaf(Value::one());
                    let not_t = store.apply(OpKind::Sub, one, t);
                    let pos = store.apply(OpKind::Mul, t, h);
                    let neg = store.apply(OpKind::Mul, not_t, l);
                    store.apply(OpKind::Add, pos, neg)
                }
            }
        }
    };
    memo.insert(d, r);
    Ok(r)
}

fn instantiated_tvd(
    store: &mut Store,
    action: &ActionModel,
    alternative: usize,
    spec: &DomainSpec,
    pred: &str,
    args: &[Term],
) -> Result<NodeId, DomainError> {
    let decl = spec
        .predicate(pred)
        .ok_or_else(|| DomainError::UnknownPredicate {
            name: pred.to_string(),
            line: 0,
            col: 0,
        })?;
    let tvd = action.tvd_for(store, alternative, decl);
    let action_args: Vec<Term> = action.params.iter().map(Term::var).collect();
    tvd.instantiate(store, args, &action_args)
}

/// Regression by naive block replacement: each tested atom is textually
/// replaced by its instantiated TVD, whose 1/0 leaves are wired to the
/// regressed children, and the result is re-ordered on the way up. Kept as
/// an independent route for equivalence checks against block combination.
pub fn regress_block_replacement(
    store: &mut Store,
    v: NodeId,
    action: &ActionModel,
    alternative: usize,
    spec: &DomainSpec,
) -> Result<NodeId, DomainError> {
    let mut memo = HashMap::new();
    replace_rec(store, v, action, alternative, spec, &mut memo)
}

fn replace_rec(
    store: &mut Store,
    d: NodeId,
    action: &ActionModel,
    alternative: usize,
    spec: &DomainSpec,
    memo: &mut HashMap<NodeId, NodeId>,
) -> Result<NodeId, DomainError> {
    if let Some(&r) = memo.get(&d) {
        return Ok(r);
    }
    let r = match store.node(d).clone() {
        Node::Leaf(_) => d,
        Node::Inner { label, hi, lo } => {
            let h = replace_rec(store, hi, action, alternative, spec, memo)?;
            let l = replace_rec(store, lo, action, alternative, spec, memo)?;
            match &label {
                Label::Equality(_, _) => store.branch(label.clone(), h, l),
                Label::Atom { pred, args } => {
                    let t = instantiated_tvd(store, action, alternative, spec, pred, args)?;
                    let mut compose_memo = HashMap::new();
                    compose_tvd(store, t, h, l, &mut compose_memo)
                }
            }
        }
    };
    memo.insert(d, r);
    Ok(r)
}

fn compose_tvd(
    store: &mut Store,
    t: NodeId,
    hi: NodeId,
    lo: NodeId,
    memo: &mut HashMap<NodeId, NodeId>,
) -> NodeId {
    if let Some(&r) = memo.get(&t) {
        return r;
    }
    let r = match store.node(t).clone() {
        Node::Leaf(leaf) => {
            if leaf.value == Value::one() {
                hi
            } else {
                lo
            }
        }
        Node::Inner {
            label,
            hi: thi,
            lo: tlo,
        } => {
            let h = compose_tvd(store, thi, hi, lo, memo);
            let l = compose_tvd(store, tlo, hi, lo, memo);
            store.branch(label, h, l)
        }
    };
    memo.insert(t, r);
    r
}

/// Which regression route [`q_function_with`] uses.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum RegressionRoute {
    #[default]
    BlockCombination,
    BlockReplacement,
}

/// The parameterized Q-function of a stochastic action against value
/// function `v` (tags on `v` are ignored).
pub fn q_function(
    store: &mut Store,
    v: NodeId,
    action: &ActionModel,
    spec: &DomainSpec,
) -> Result<QDiagram, DomainError> {
    q_function_with(store, v, action, spec, RegressionRoute::BlockCombination)
}

pub fn q_function_with(
    store: &mut Store,
    v: NodeId,
    action: &ActionModel,
    spec: &DomainSpec,
    route: RegressionRoute,
) -> Result<QDiagram, DomainError> {
    let stripped = store.strip_tags(v);
    let value_view = store.reduce(stripped);
    let protected: BTreeSet<String> = action.params.iter().cloned().collect();

    let mut acc = store.zero_leaf();
    for j in 0..action.alternatives.len() {
        let vj = store.standardize_apart(value_view, &BTreeSet::new());
        let regressed = match route {
            RegressionRoute::BlockCombination => {
                regress_deterministic(store, vj, action, j, spec)?
            }
            RegressionRoute::BlockReplacement => {
                regress_block_replacement(store, vj, action, j, spec)?
            }
        };
        let weighted = store.apply(OpKind::Mul, action.alternatives[j].prob, regressed);
        acc = store.apply(OpKind::Add, acc, weighted);
    }
    let backup = store.scale(acc, &spec.discount);
    let reward = store.standardize_apart(spec.reward, &BTreeSet::new());
    let combined = if spec.absorbing_goal {
        // Max aggregation commutes with pointwise max, so the reward and the
        // backup may share variable names; aligning them on the canonical
        // scheme keeps the combined diagram near the size of its operands.
        let reward = store.canonical_rename(reward);
        let backup = store.canonical_rename_keep(backup, &protected);
        store.apply(OpKind::Max, reward, backup)
    } else {
        store.apply(OpKind::Add, reward, backup)
    };
    let reduced = store.reduce_protected(combined, &protected);
    let tag = ActionTag::new(
        action.name.clone(),
        action.params.iter().map(Term::var).collect(),
    );
    let diagram = store.retag_leaves(reduced, &tag);
    Ok(QDiagram {
        action: action.name.clone(),
        params: action.params.clone(),
        diagram,
    })
}

/// Object maximization: renames the action parameters to fresh variables so
/// max aggregation ranges over them. Tags keep the renamed parameters, so
/// the maximizing binding identifies the ground action.
pub fn object_max(store: &mut Store, q: &QDiagram) -> NodeId {
    let mut subst = std::collections::BTreeMap::new();
    for p in &q.params {
        let fresh = store.fresh_var();
        subst.insert(p.clone(), Term::var(fresh));
    }
    store
        .substitute(q.diagram, &subst)
        .expect("fresh names cannot capture")
}

/// One greedy backup: the pairwise max of all object-maximized Q-functions.
/// The same diagram is returned as the new value function (tags ignored) and
/// as the greedy policy (tags kept). Value ties prefer the no-change action,
/// then earlier declaration order.
pub fn rel_greedy(
    store: &mut Store,
    v: NodeId,
    spec: &DomainSpec,
    generation: u32,
) -> Result<(NodeId, PolicyDiagram), DomainError> {
    let noop = spec
        .noop_action(store)
        .ok_or(DomainError::MissingNoop)?
        .clone();
    let mut order: Vec<&ActionModel> = vec![&noop];
    for action in &spec.actions {
        if action.name != noop.name {
            order.push(action);
        }
    }
    let mut acc: Option<NodeId> = None;
    for action in order {
        let q = q_function(store, v, action, spec)?;
        let maxed = object_max(store, &q);
        // Operands of a pointwise max may share variables (max aggregation
        // commutes with max), so align every Q-function on the canonical
        // names instead of letting disjoint fresh variables multiply, and
        // reduce after every fold step to keep the accumulator small.
        let maxed = store.canonical_rename(maxed);
        acc = Some(match acc {
            None => maxed,
            Some(a) => {
                let folded = store.apply(OpKind::Max, a, maxed);
                store.reduce(folded)
            }
        });
    }
    let reduced = store.reduce(acc.expect("at least the no-change action"));
    let noop_tag = ActionTag::new(noop.name.clone(), Vec::new());
    let result = store.retag_untagged_leaves(reduced, &noop_tag);
    Ok((
        result,
        PolicyDiagram {
            root: result,
            generation,
        },
    ))
}
