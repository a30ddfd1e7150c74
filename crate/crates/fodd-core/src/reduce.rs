//! Reduction operators.
//!
//! Hash-consing and the identical-children collapse are enforced by
//! construction. On top of those this module applies node-level rewrites:
//!
//! - equality propagation: inside the true branch of `t1 = t2`, the
//!   order-later variable is replaced by the order-earlier term;
//! - tautology collapse: `t = t` selects its true branch (done in `branch`);
//! - equality elimination: a node `a = b` is replaced by its rewritten true
//!   branch `H` when one side is a variable that is tested on no path above
//!   the node, is not protected, and `H` dominates the false branch
//!   pointwise. Any valuation that fell into the false branch can redirect
//!   the free variable to satisfy the equality and reach a value at least
//!   as large, so the max-aggregated map is unchanged;
//!
//! and, for diagrams with nonnegative leaves, a path-level normalization.
//! Such a diagram equals the pointwise max of its root-to-leaf paths (each
//! path read as condition -> leaf, else 0), which licenses three exact
//! rewrites on the path set: merging variables through positive equality
//! literals, dropping zero-valued paths (the implicit default already
//! contributes 0), and dropping paths whose condition is subsumed — under a
//! variable renaming — by the condition of a path with at least the same
//! value. The surviving paths are rebuilt into aligned single-path diagrams
//! and folded back with max, which collapses the cross products that
//! accumulate when diagrams over disjoint variables are combined.
//!
//! A rewrite may never eliminate a variable the caller intends to bind
//! explicitly; such variables (action parameters of a Q-function) are passed
//! in `protected`.
//!
//! Every rewrite preserves `map_max` on every interpretation; the test suite
//! re-checks this by enumeration against a declared vocabulary.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::label::Label;
use crate::store::{Node, NodeId, Store};
use crate::term::{ActionTag, Term};
use crate::value::Value;

/// Beyond this many root-to-leaf paths the path-level pass is skipped.
const PATH_CAP: usize = 20_000;

#[derive(Clone, Debug)]
struct PathRule {
    literals: Vec<(Label, bool)>,
    value: Value,
    tag: Option<ActionTag>,
}

impl Store {
    /// Applies the reduction operators to a fixpoint. The result is
    /// semantically equivalent to `d` and never larger.
    pub fn reduce(&mut self, d: NodeId) -> NodeId {
        self.reduce_protected(d, &BTreeSet::new())
    }

    /// Like [`Store::reduce`], but never eliminates a protected variable.
    pub fn reduce_protected(&mut self, d: NodeId, protected: &BTreeSet<String>) -> NodeId {
        // Reductions target desk-scale diagrams; oversized ones (which arise
        // only in domains whose value functions genuinely keep refining)
        // pass through and are caught by the solver's node budget.
        if self.size(d) > 6_000 {
            return d;
        }
        let original = d;
        let mut current = d;
        let mut seen = BTreeSet::new();
        for _ in 0..16 {
            if !seen.insert(current) {
                break;
            }
            let node_pass = self.reduce_pass(current, protected);
            let next = self.path_normalize(node_pass, protected);
            if next == current {
                break;
            }
            current = next;
        }
        if self.size(current) <= self.size(original) {
            current
        } else {
            original
        }
    }

    /// Path-level normalization for diagrams with nonnegative leaves; see
    /// the module docs. Returns the input unchanged when it does not apply
    /// or does not shrink the diagram.
    fn path_normalize(&mut self, d: NodeId, protected: &BTreeSet<String>) -> NodeId {
        if self.min_leaf(d).is_negative() || self.is_leaf(d) {
            return d;
        }
        let Some(rules) = self.enumerate_path_rules(d) else {
            return d;
        };
        let rules: Vec<PreparedRule> = rules
            .into_iter()
            .filter_map(|r| diagonalize_rule(r, protected))
            .filter(|r| !r.value.is_zero())
            .map(PreparedRule::new)
            .collect();
        // Greedy survivor set: rules are visited by descending value (ties
        // by path order) and kept only if no already-kept rule subsumes
        // them. Subsumption composes, so checking against survivors alone
        // drops everything the full pairwise check would.
        let mut order: Vec<usize> = (0..rules.len()).collect();
        order.sort_by(|&a, &b| rules[b].rule.value.cmp(&rules[a].rule.value).then(a.cmp(&b)));
        let run_dominance = rules.len() <= 30_000;
        let mut kept: Vec<usize> = Vec::new();
        for t in order {
            let dominated = run_dominance
                && kept.iter().any(|&p| {
                    rules[p].prefilter(&rules[t])
                        && theta_subsumes(&rules[p].rule, &rules[t].lits, protected)
                });
            if !dominated {
                kept.push(t);
            }
        }
        kept.sort_unstable();
        let survivors: Vec<&PathRule> = kept.iter().map(|&i| &rules[i].rule).collect();
        let zero = self.zero_leaf();
        let mut acc: Option<NodeId> = None;
        for rule in survivors {
            let leaf = self.mk_leaf_tagged(rule.value.clone(), rule.tag.clone());
            let mut chain = leaf;
            for (label, sign) in rule.literals.iter().rev() {
                chain = if *sign {
                    self.branch(label.clone(), chain, zero)
                } else {
                    self.branch(label.clone(), zero, chain)
                };
            }
            let aligned = self.canonical_rename_keep(chain, protected);
            acc = Some(match acc {
                None => aligned,
                Some(a) => self.apply(crate::store::OpKind::Max, a, aligned),
            });
        }
        let rebuilt = acc.unwrap_or(zero);
        if self.size(rebuilt) <= self.size(d) {
            rebuilt
        } else {
            d
        }
    }

    fn enumerate_path_rules(&self, d: NodeId) -> Option<Vec<PathRule>> {
        let mut rules = Vec::new();
        let mut stack = Vec::new();
        if self.paths_rec(d, &mut stack, &mut rules) {
            Some(rules)
        } else {
            None
        }
    }

    fn paths_rec(
        &self,
        d: NodeId,
        stack: &mut Vec<(Label, bool)>,
        rules: &mut Vec<PathRule>,
    ) -> bool {
        match self.node(d) {
            Node::Leaf(leaf) => {
                if rules.len() >= PATH_CAP {
                    return false;
                }
                rules.push(PathRule {
                    literals: stack.clone(),
                    value: leaf.value.clone(),
                    tag: leaf.tag.clone(),
                });
                true
            }
            Node::Inner { label, hi, lo } => {
                stack.push((label.clone(), true));
                let ok = self.paths_rec(*hi, stack, rules);
                stack.pop();
                if !ok {
                    return false;
                }
                stack.push((label.clone(), false));
                let ok = self.paths_rec(*lo, stack, rules);
                stack.pop();
                ok
            }
        }
    }

    fn reduce_pass(&mut self, d: NodeId, protected: &BTreeSet<String>) -> NodeId {
        let above = self.vars_above(d);
        let mut memo = HashMap::new();
        self.reduce_rec(d, &above, protected, &mut memo)
    }

    fn reduce_rec(
        &mut self,
        d: NodeId,
        above: &HashMap<NodeId, BTreeSet<String>>,
        protected: &BTreeSet<String>,
        memo: &mut HashMap<NodeId, NodeId>,
    ) -> NodeId {
        if let Some(&r) = memo.get(&d) {
            return r;
        }
        let r = match self.node(d).clone() {
            Node::Leaf(_) => d,
            Node::Inner { label, hi, lo } => {
                let mut h = self.reduce_rec(hi, above, protected, memo);
                let l = self.reduce_rec(lo, above, protected, memo);
                if let Label::Equality(a, b) = &label {
                    // Equality propagation into the true branch.
                    if let Term::Var(vb) = b {
                        let mut subst = BTreeMap::new();
                        subst.insert(vb.clone(), a.clone());
                        h = self.substitute_merging(h, &subst);
                    }
                    let free = |v: &str| {
                        !protected.contains(v)
                            && above.get(&d).is_some_and(|vs| !vs.contains(v))
                    };
                    // Elimination via the order-later variable.
                    if let Term::Var(vb) = b {
                        if free(vb) && self.dominates(h, l) {
                            memo.insert(d, h);
                            return h;
                        }
                    }
                    // Elimination via the order-earlier variable.
                    if let Term::Var(va) = a {
                        if free(va) {
                            let mut subst = BTreeMap::new();
                            subst.insert(va.clone(), b.clone());
                            let h2 = self.substitute_merging(h, &subst);
                            if self.dominates(h2, l) {
                                memo.insert(d, h2);
                                return h2;
                            }
                        }
                    }
                }
                self.branch(label, h, l)
            }
        };
        memo.insert(d, r);
        r
    }

    /// Pointwise domination: `hi(z) >= lo(z)` for every interpretation and
    /// valuation, established by the leaf bound on the shared-variable
    /// difference. Falls back to a cheap leaf comparison (and then to "no")
    /// when the difference diagram would be large, which only keeps a node
    /// that could have been dropped.
    fn dominates(&mut self, hi: NodeId, lo: NodeId) -> bool {
        if hi == lo {
            return true;
        }
        if self.min_leaf(hi) >= self.max_leaf(lo) {
            return true;
        }
        if self.size(hi).saturating_mul(self.size(lo)) > 20_000 {
            return false;
        }
        let a = self.strip_tags(hi);
        let b = self.strip_tags(lo);
        let diff = self.apply(crate::store::OpKind::Sub, a, b);
        !self.min_leaf(diff).is_negative()
    }

    /// Substitution that deliberately merges variables (no capture check);
    /// used by equality propagation where the merge is the point.
    pub(crate) fn substitute_merging(
        &mut self,
        d: NodeId,
        subst: &BTreeMap<String, Term>,
    ) -> NodeId {
        if subst.is_empty() {
            return d;
        }
        let mut memo = HashMap::new();
        self.substitute_rec(d, subst, &mut memo)
    }

    /// Variables appearing in labels on any path strictly above each node.
    /// Children are interned before their parents, so descending id order is
    /// a topological order with parents first.
    fn vars_above(&self, d: NodeId) -> HashMap<NodeId, BTreeSet<String>> {
        let mut above: HashMap<NodeId, BTreeSet<String>> = HashMap::new();
        above.insert(d, BTreeSet::new());
        let mut order = self.reachable(d);
        order.reverse();
        for n in order {
            if let Node::Inner { label, hi, lo } = self.node(n) {
                let mut down = above.get(&n).cloned().unwrap_or_default();
                for v in label.vars() {
                    down.insert(v.to_string());
                }
                for child in [*hi, *lo] {
                    above.entry(child).or_default().extend(down.iter().cloned());
                }
            }
        }
        above
    }
}

/// Merges variables through the rule's positive equality literals (never
/// substituting a protected variable away), removes tautologies and
/// duplicates, and reports contradictory conditions as `None`.
fn diagonalize_rule(mut rule: PathRule, protected: &BTreeSet<String>) -> Option<PathRule> {
    loop {
        let mut merge: Option<BTreeMap<String, Term>> = None;
        let mut remove: Option<usize> = None;
        for (i, (label, sign)) in rule.literals.iter().enumerate() {
            if !*sign {
                continue;
            }
            if let Label::Equality(a, b) = label {
                if a == b {
                    remove = Some(i);
                    break;
                }
                let mergeable = |t: &Term| match t {
                    Term::Var(v) => !protected.contains(v),
                    Term::Const(_) => false,
                };
                let subst = if mergeable(b) {
                    Some((b.name().to_string(), a.clone()))
                } else if mergeable(a) {
                    Some((a.name().to_string(), b.clone()))
                } else {
                    None
                };
                if let Some((from, to)) = subst {
                    let mut m = BTreeMap::new();
                    m.insert(from, to);
                    merge = Some(m);
                    remove = Some(i);
                    break;
                }
            }
        }
        match (merge, remove) {
            (None, None) => break,
            (subst, Some(i)) => {
                rule.literals.remove(i);
                if let Some(subst) = subst {
                    for (label, _) in rule.literals.iter_mut() {
                        *label = label.apply(&subst);
                    }
                    if let Some(tag) = &mut rule.tag {
                        *tag = tag.apply(&subst);
                    }
                }
            }
            (Some(_), None) => unreachable!(),
        }
    }
    // Consistency and cleanup after merging.
    let mut seen = BTreeSet::new();
    let mut cleaned = Vec::with_capacity(rule.literals.len());
    for (label, sign) in rule.literals {
        if let Label::Equality(a, b) = &label {
            if a == b {
                if sign {
                    continue; // tautology
                }
                return None; // ¬(t = t) is unsatisfiable
            }
        }
        if seen.contains(&(label.clone(), !sign)) {
            return None; // contradictory condition
        }
        if seen.insert((label.clone(), sign)) {
            cleaned.push((label, sign));
        }
    }
    rule.literals = cleaned;
    Some(rule)
}

/// Caps the backtracking work of one subsumption test; exceeding it counts
/// as "not subsumed", which only keeps more paths than necessary.
const SUBSUMPTION_STEP_CAP: usize = 10_000;

type ShapeKey = (Option<(String, usize)>, bool);

/// A path rule plus precomputed matching indexes.
struct PreparedRule {
    rule: PathRule,
    lits: BTreeSet<(Label, bool)>,
    /// Literal counts by (predicate shape, sign); equalities use `None`.
    shape: BTreeMap<ShapeKey, usize>,
    /// Like `shape`, excluding positive equalities (tautology-satisfiable).
    need: BTreeMap<ShapeKey, usize>,
}

impl PreparedRule {
    fn new(rule: PathRule) -> PreparedRule {
        let shape_of = |l: &Label| match l {
            Label::Atom { pred, args } => Some((pred.clone(), args.len())),
            Label::Equality(_, _) => None,
        };
        let mut shape: BTreeMap<ShapeKey, usize> = BTreeMap::new();
        let mut need: BTreeMap<ShapeKey, usize> = BTreeMap::new();
        for (l, s) in &rule.literals {
            *shape.entry((shape_of(l), *s)).or_default() += 1;
            if !(*s && l.is_equality()) {
                *need.entry((shape_of(l), *s)).or_default() += 1;
            }
        }
        let lits = rule.literals.iter().map(|(l, s)| (l.clone(), *s)).collect();
        PreparedRule {
            rule,
            lits,
            shape,
            need,
        }
    }

    /// Necessary condition for `self` to subsume `target`.
    fn prefilter(&self, target: &PreparedRule) -> bool {
        self.need
            .iter()
            .all(|(key, n)| target.shape.get(key).copied().unwrap_or(0) >= *n)
    }
}

/// True when the dominator's condition maps into the target's literal set
/// under some variable renaming that fixes protected variables. Positive
/// equalities whose sides coincide after renaming are trivially satisfied.
fn theta_subsumes(
    dominator: &PathRule,
    target_lits: &BTreeSet<(Label, bool)>,
    protected: &BTreeSet<String>,
) -> bool {
    // Most-constrained-first literal order keeps the backtracking shallow.
    let mut literals = dominator.literals.clone();
    literals.sort_by_key(|(l, s)| {
        let candidates = target_lits
            .iter()
            .filter(|(c, cs)| cs == s && std::mem::discriminant(c) == std::mem::discriminant(l))
            .count();
        (l.vars().is_empty(), candidates)
    });
    let mut assignment: BTreeMap<String, Term> = protected
        .iter()
        .map(|v| (v.clone(), Term::var(v.clone())))
        .collect();
    let mut budget = SUBSUMPTION_STEP_CAP;
    match_literals(&literals, 0, &mut assignment, target_lits, &mut budget)
}

fn match_literals(
    literals: &[(Label, bool)],
    at: usize,
    assignment: &mut BTreeMap<String, Term>,
    target: &BTreeSet<(Label, bool)>,
    budget: &mut usize,
) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let Some((label, sign)) = literals.get(at) else {
        return true;
    };
    // A fully assigned positive equality with equal sides needs no witness.
    if *sign {
        if let Label::Equality(a, b) = label {
            let ra = resolve(a, assignment);
            let rb = resolve(b, assignment);
            if let (Some(ra), Some(rb)) = (&ra, &rb) {
                if ra == rb && match_literals(literals, at + 1, assignment, target, budget) {
                    return true;
                }
            }
        }
    }
    for (cand, cand_sign) in target {
        if cand_sign != sign {
            continue;
        }
        let mut trail = Vec::new();
        if unify_label(label, cand, assignment, &mut trail)
            && match_literals(literals, at + 1, assignment, target, budget)
        {
            return true;
        }
        for v in trail {
            assignment.remove(&v);
        }
    }
    false
}

fn resolve(t: &Term, assignment: &BTreeMap<String, Term>) -> Option<Term> {
    match t {
        Term::Var(v) => assignment.get(v).cloned(),
        Term::Const(_) => Some(t.clone()),
    }
}

fn unify_label(
    pattern: &Label,
    target: &Label,
    assignment: &mut BTreeMap<String, Term>,
    trail: &mut Vec<String>,
) -> bool {
    match (pattern, target) {
        (Label::Atom { pred: p1, args: a1 }, Label::Atom { pred: p2, args: a2 }) => {
            p1 == p2 && a1.len() == a2.len() && unify_terms(a1, a2, assignment, trail)
        }
        (Label::Equality(a, b), Label::Equality(l, r)) => {
            let mark = trail.len();
            if unify_terms(
                std::slice::from_ref(a),
                std::slice::from_ref(l),
                assignment,
                trail,
            ) && unify_terms(
                std::slice::from_ref(b),
                std::slice::from_ref(r),
                assignment,
                trail,
            ) {
                return true;
            }
            for v in trail.drain(mark..) {
                assignment.remove(&v);
            }
            unify_terms(
                std::slice::from_ref(a),
                std::slice::from_ref(r),
                assignment,
                trail,
            ) && unify_terms(
                std::slice::from_ref(b),
                std::slice::from_ref(l),
                assignment,
                trail,
            )
        }
        _ => false,
    }
}

fn unify_terms(
    pattern: &[Term],
    target: &[Term],
    assignment: &mut BTreeMap<String, Term>,
    trail: &mut Vec<String>,
) -> bool {
    let mark = trail.len();
    for (p, t) in pattern.iter().zip(target) {
        let ok = match p {
            Term::Const(_) => p == t,
            Term::Var(v) => match assignment.get(v) {
                Some(bound) => bound == t,
                None => {
                    assignment.insert(v.clone(), t.clone());
                    trail.push(v.clone());
                    true
                }
            },
        };
        if !ok {
            for v in trail.drain(mark..) {
                assignment.remove(&v);
            }
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Label;
    use crate::term::Term;
    use crate::value::Value;

    fn atom(p: &str, v: &str) -> Label {
        Label::atom(p, vec![Term::var(v)])
    }

    fn eq(a: &str, b: &str) -> Label {
        Label::equality(Term::var(a), Term::var(b))
    }

    #[test]
    fn neglect_collapses_identical_children() {
        let mut s = Store::new();
        let five = s.mk_leaf(Value::from_int(5));
        let n = s.mk_node(atom("p", "x"), five, five).unwrap();
        assert_eq!(n, five);
    }

    #[test]
    fn equality_propagation_rewrites_nested_equalities() {
        let mut s = Store::new();
        let five = s.mk_leaf(Value::from_int(5));
        let three = s.mk_leaf(Value::from_int(3));
        // A negative leaf keeps the path-level pass out of the picture, so
        // this exercises the node-level rewrites in isolation.
        let neg = s.mk_leaf(Value::from_int(-7));
        let inner = s.branch(eq("y", "z"), five, three);
        let d = s.branch(eq("x", "y"), inner, neg);
        let protected: BTreeSet<String> = ["x".to_string(), "z".to_string()].into();
        let r = s.reduce_protected(d, &protected);
        // Propagation turns y = z into x = z under x = y; elimination then
        // drops the outer guard because its rewritten true branch (worst
        // leaf 3) dominates the false branch (-7).
        let expected = s.branch(eq("x", "z"), five, three);
        assert_eq!(r, expected);
    }

    #[test]
    fn free_equality_with_dominated_false_branch_is_dropped() {
        let mut s = Store::new();
        let one = s.mk_leaf(Value::one());
        let zero = s.zero_leaf();
        // p(y) under the guard x = y, else 0. Aggregation can always pick
        // x = y, so the guard drops; the rebuilt test is on the canonical
        // variable.
        let py = s.mk_node(atom("p", "y"), one, zero).unwrap();
        let d = s.branch(eq("x", "y"), py, zero);
        let r = s.reduce(d);
        let expected = s.mk_node(atom("p", "v01"), one, zero).unwrap();
        assert_eq!(r, expected);
    }

    #[test]
    fn protected_variables_are_not_eliminated() {
        let mut s = Store::new();
        let one = s.mk_leaf(Value::one());
        let zero = s.zero_leaf();
        let py = s.mk_node(atom("p", "y"), one, zero).unwrap();
        let d = s.branch(eq("x", "y"), py, zero);
        let protected: BTreeSet<String> = ["x".to_string(), "y".to_string()].into();
        let r = s.reduce_protected(d, &protected);
        let has_equality = s
            .reachable(r)
            .into_iter()
            .any(|n| s.root_label(n).is_some_and(|l| l.is_equality()));
        assert!(has_equality, "equality over protected variables must survive");
    }

    #[test]
    fn equality_is_kept_when_neither_side_dominates() {
        let mut s = Store::new();
        let one = s.mk_leaf(Value::one());
        let five = s.mk_leaf(Value::from_int(5));
        let zero = s.zero_leaf();
        // (x = y) ? (p(y) ? 1 : 0) : (p(x) ? 0 : 5): neither branch
        // dominates the other pointwise, so elimination must not fire.
        let py = s.mk_node(atom("p", "y"), one, zero).unwrap();
        let lo = s.mk_node(atom("p", "x"), zero, five).unwrap();
        let d = s.branch(eq("x", "y"), py, lo);
        let r = s.reduce(d);
        let has_equality = s
            .reachable(r)
            .into_iter()
            .any(|n| s.root_label(n).is_some_and(|l| l.is_equality()));
        assert!(has_equality, "non-dominated equality must survive");
    }
}
