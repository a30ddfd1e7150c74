//! Hash-consed node storage and the diagram combinators.
//!
//! All diagrams live in a [`Store`]: an append-only arena with an intern
//! table. A diagram is just a [`NodeId`] pointing into its store. Nodes are
//! immutable once created, so equal subdiagrams are represented by the same
//! id and structural equality is pointer equality.
//!
//! Construction goes through two entry points:
//!
//! - [`Store::mk_node`] requires the label to precede both children in the
//!   global label order and fails otherwise;
//! - [`Store::branch`] inserts a label at its proper depth, re-ordering as
//!   needed. Substitution and regression use it to re-normalize diagrams
//!   whose label order was disturbed.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::label::Label;
use crate::term::{ActionTag, Term};
use crate::value::Value;
use crate::FoddError;

/// Reference to a node inside a particular store.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Leaf payload: an exact value plus an optional action annotation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Leaf {
    pub value: Value,
    pub tag: Option<ActionTag>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Leaf(Leaf),
    Inner {
        label: Label,
        hi: NodeId,
        lo: NodeId,
    },
}

/// Pointwise arithmetic operations for [`Store::apply`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Max,
    Min,
}

struct Entry {
    node: Node,
    /// True when some reachable leaf carries an action tag.
    tagged: bool,
    min_leaf: Value,
    max_leaf: Value,
}

/// The node store. Reads are cheap and side-effect free; all construction
/// methods take `&mut self` and intern through the dedup table.
pub struct Store {
    entries: Vec<Entry>,
    intern: HashMap<Node, NodeId>,
    apply_cache: HashMap<(OpKind, NodeId, NodeId), NodeId>,
    branch_cache: HashMap<(Label, NodeId, NodeId), NodeId>,
    fresh_counter: u64,
}

impl Default for Store {
    fn default() -> Self {
        Store::new()
    }
}

impl Store {
    pub fn new() -> Store {
        Store {
            entries: Vec::new(),
            intern: HashMap::new(),
            apply_cache: HashMap::new(),
            branch_cache: HashMap::new(),
            fresh_counter: 0,
        }
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.entries[id.index()].node
    }

    pub fn leaf(&self, id: NodeId) -> Option<&Leaf> {
        match self.node(id) {
            Node::Leaf(l) => Some(l),
            Node::Inner { .. } => None,
        }
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.node(id), Node::Leaf(_))
    }

    pub fn root_label(&self, id: NodeId) -> Option<&Label> {
        match self.node(id) {
            Node::Inner { label, .. } => Some(label),
            Node::Leaf(_) => None,
        }
    }

    pub fn node_count(&self) -> usize {
        self.entries.len()
    }

    /// True when some reachable leaf of `d` carries an action tag.
    pub fn has_tags(&self, d: NodeId) -> bool {
        self.entries[d.index()].tagged
    }

    pub fn min_leaf(&self, d: NodeId) -> Value {
        self.entries[d.index()].min_leaf.clone()
    }

    pub fn max_leaf(&self, d: NodeId) -> Value {
        self.entries[d.index()].max_leaf.clone()
    }

    /// Maximum of `|leaf value|` over all reachable leaves.
    pub fn max_abs_leaf(&self, d: NodeId) -> Value {
        self.min_leaf(d).abs().max(self.max_leaf(d).abs())
    }

    fn intern_node(&mut self, node: Node) -> NodeId {
        if let Some(&id) = self.intern.get(&node) {
            return id;
        }
        let (tagged, min_leaf, max_leaf) = match &node {
            Node::Leaf(l) => (l.tag.is_some(), l.value.clone(), l.value.clone()),
            Node::Inner { hi, lo, .. } => {
                let eh = &self.entries[hi.index()];
                let el = &self.entries[lo.index()];
                (
                    eh.tagged || el.tagged,
                    eh.min_leaf.clone().min(el.min_leaf.clone()),
                    eh.max_leaf.clone().max(el.max_leaf.clone()),
                )
            }
        };
        let id = NodeId(self.entries.len() as u32);
        self.entries.push(Entry {
            node: node.clone(),
            tagged,
            min_leaf,
            max_leaf,
        });
        self.intern.insert(node, id);
        id
    }

    pub fn mk_leaf(&mut self, value: Value) -> NodeId {
        self.intern_node(Node::Leaf(Leaf { value, tag: None }))
    }

    pub fn mk_leaf_tagged(&mut self, value: Value, tag: Option<ActionTag>) -> NodeId {
        self.intern_node(Node::Leaf(Leaf { value, tag }))
    }

    pub fn zero_leaf(&mut self) -> NodeId {
        self.mk_leaf(Value::zero())
    }

    /// Canonical constructor. Fails unless `label` strictly precedes the root
    /// labels of both children; collapses identical children.
    pub fn mk_node(&mut self, label: Label, hi: NodeId, lo: NodeId) -> Result<NodeId, FoddError> {
        for child in [hi, lo] {
            if let Some(child_label) = self.root_label(child) {
                if label >= *child_label {
                    return Err(FoddError::OrderingViolation {
                        parent: label.to_string(),
                        child: child_label.to_string(),
                    });
                }
            }
        }
        Ok(self.mk_node_unchecked(label, hi, lo))
    }

    fn mk_node_unchecked(&mut self, label: Label, hi: NodeId, lo: NodeId) -> NodeId {
        if hi == lo {
            return hi;
        }
        debug_assert!(self
            .root_label(hi)
            .map_or(true, |l| label < *l));
        debug_assert!(self
            .root_label(lo)
            .map_or(true, |l| label < *l));
        self.intern_node(Node::Inner { label, hi, lo })
    }

    /// Restricts `d` to `label = val` at the root; identity when the root is
    /// labeled differently (which, in ordered use, means `d` does not test
    /// `label` at all on that level).
    fn cofactor(&self, d: NodeId, label: &Label, val: bool) -> NodeId {
        match self.node(d) {
            Node::Inner { label: l, hi, lo } if l == label => {
                if val {
                    *hi
                } else {
                    *lo
                }
            }
            _ => d,
        }
    }

    /// Inserts a test on `label` above `hi`/`lo`, restoring the path-ordering
    /// invariant no matter how `label` compares to the children's labels.
    /// Tautological equalities (`t = t`) select the true branch outright.
    pub fn branch(&mut self, label: Label, hi: NodeId, lo: NodeId) -> NodeId {
        if let Label::Equality(a, b) = &label {
            if a == b {
                return hi;
            }
        }
        if hi == lo {
            return hi;
        }
        let key = (label.clone(), hi, lo);
        if let Some(&id) = self.branch_cache.get(&key) {
            return id;
        }
        let hi_root = self.root_label(hi).cloned();
        let lo_root = self.root_label(lo).cloned();
        let label_first = hi_root.as_ref().map_or(true, |l| label <= *l)
            && lo_root.as_ref().map_or(true, |l| label <= *l);
        let result = if label_first {
            let h = self.cofactor(hi, &label, true);
            let l = self.cofactor(lo, &label, false);
            self.mk_node_unchecked(label, h, l)
        } else {
            // Some child root precedes `label`: expand on the smaller root.
            let m = match (hi_root, lo_root) {
                (Some(a), Some(b)) => {
                    if a <= b {
                        a
                    } else {
                        b
                    }
                }
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!("two leaves always admit label first"),
            };
            let h1 = self.cofactor(hi, &m, true);
            let l1 = self.cofactor(lo, &m, true);
            let h0 = self.cofactor(hi, &m, false);
            let l0 = self.cofactor(lo, &m, false);
            let t = self.branch(label.clone(), h1, l1);
            let f = self.branch(label.clone(), h0, l0);
            self.mk_node_unchecked(m, t, f)
        };
        self.branch_cache.insert(key, result);
        result
    }

    fn combine_leaves(&self, op: OpKind, a: &Leaf, b: &Leaf) -> Leaf {
        match op {
            OpKind::Max => {
                if a.value >= b.value {
                    a.clone()
                } else {
                    b.clone()
                }
            }
            OpKind::Min => {
                if a.value <= b.value {
                    a.clone()
                } else {
                    b.clone()
                }
            }
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                let value = match op {
                    OpKind::Add => &a.value + &b.value,
                    OpKind::Sub => &a.value - &b.value,
                    OpKind::Mul => &a.value * &b.value,
                    _ => unreachable!(),
                };
                // Arithmetic keeps whichever tag is present; with two tags the
                // side contributing a nonzero value wins, ties go left.
                let tag = match (&a.tag, &b.tag) {
                    (None, None) => None,
                    (Some(t), None) => Some(t.clone()),
                    (None, Some(t)) => Some(t.clone()),
                    (Some(ta), Some(tb)) => {
                        if a.value.is_zero() && !b.value.is_zero() {
                            Some(tb.clone())
                        } else {
                            Some(ta.clone())
                        }
                    }
                };
                Leaf { value, tag }
            }
        }
    }

    /// Leaf-dominance shortcuts for max/min against a whole subdiagram.
    /// Tie-breaking mirrors `combine_leaves`: equal values keep the left
    /// operand's leaf, so comparisons against the right operand are strict.
    fn apply_shortcut(&mut self, op: OpKind, a: NodeId, b: NodeId) -> Option<NodeId> {
        match op {
            OpKind::Max => {
                if let Node::Leaf(la) = self.node(a) {
                    if la.value >= self.entries[b.index()].max_leaf {
                        return Some(a);
                    }
                    if la.value < self.entries[b.index()].min_leaf {
                        return Some(b);
                    }
                }
                if let Node::Leaf(lb) = self.node(b) {
                    if lb.value > self.entries[a.index()].max_leaf {
                        return Some(b);
                    }
                    if lb.value <= self.entries[a.index()].min_leaf {
                        return Some(a);
                    }
                }
                None
            }
            OpKind::Min => {
                if let Node::Leaf(la) = self.node(a) {
                    if la.value <= self.entries[b.index()].min_leaf {
                        return Some(a);
                    }
                    if la.value > self.entries[b.index()].max_leaf {
                        return Some(b);
                    }
                }
                if let Node::Leaf(lb) = self.node(b) {
                    if lb.value < self.entries[a.index()].min_leaf {
                        return Some(b);
                    }
                    if lb.value >= self.entries[a.index()].max_leaf {
                        return Some(a);
                    }
                }
                None
            }
            OpKind::Add => {
                let zero_untagged = |s: &Store, n: NodeId| match s.node(n) {
                    Node::Leaf(l) => l.value.is_zero() && l.tag.is_none(),
                    _ => false,
                };
                if zero_untagged(self, a) {
                    return Some(b);
                }
                if zero_untagged(self, b) {
                    return Some(a);
                }
                None
            }
            OpKind::Mul => {
                let unit_untagged = |s: &Store, n: NodeId| match s.node(n) {
                    Node::Leaf(l) => l.value == Value::one() && l.tag.is_none(),
                    _ => false,
                };
                if unit_untagged(self, a) {
                    return Some(b);
                }
                if unit_untagged(self, b) {
                    return Some(a);
                }
                None
            }
            OpKind::Sub => None,
        }
    }

    /// Pointwise combination of two diagrams over the union of their
    /// variables; shared variable names denote the same variable. Classic
    /// two-operand dynamic programming, memoized on node pairs.
    pub fn apply(&mut self, op: OpKind, a: NodeId, b: NodeId) -> NodeId {
        if let Some(short) = self.apply_shortcut(op, a, b) {
            return short;
        }
        let key = (op, a, b);
        if let Some(&id) = self.apply_cache.get(&key) {
            return id;
        }
        let result = match (self.node(a).clone(), self.node(b).clone()) {
            (Node::Leaf(la), Node::Leaf(lb)) => {
                let leaf = self.combine_leaves(op, &la, &lb);
                self.mk_leaf_tagged(leaf.value, leaf.tag)
            }
            (na, nb) => {
                let la = match &na {
                    Node::Inner { label, .. } => Some(label.clone()),
                    Node::Leaf(_) => None,
                };
                let lb = match &nb {
                    Node::Inner { label, .. } => Some(label.clone()),
                    Node::Leaf(_) => None,
                };
                let split = match (&la, &lb) {
                    (Some(x), Some(y)) => {
                        if x <= y {
                            x.clone()
                        } else {
                            y.clone()
                        }
                    }
                    (Some(x), None) => x.clone(),
                    (None, Some(y)) => y.clone(),
                    (None, None) => unreachable!(),
                };
                let a1 = self.cofactor(a, &split, true);
                let a0 = self.cofactor(a, &split, false);
                let b1 = self.cofactor(b, &split, true);
                let b0 = self.cofactor(b, &split, false);
                let hi = self.apply(op, a1, b1);
                let lo = self.apply(op, a0, b0);
                self.mk_node_unchecked(split, hi, lo)
            }
        };
        self.apply_cache.insert(key, result);
        result
    }

    /// Multiplies every leaf value by `c`, preserving structure and tags up
    /// to re-canonicalization.
    pub fn scale(&mut self, d: NodeId, c: &Value) -> NodeId {
        let mut memo = HashMap::new();
        self.scale_rec(d, c, &mut memo)
    }

    fn scale_rec(&mut self, d: NodeId, c: &Value, memo: &mut HashMap<NodeId, NodeId>) -> NodeId {
        if let Some(&r) = memo.get(&d) {
            return r;
        }
        let r = match self.node(d).clone() {
            Node::Leaf(l) => self.mk_leaf_tagged(&l.value * c, l.tag),
            Node::Inner { label, hi, lo } => {
                let h = self.scale_rec(hi, c, memo);
                let l = self.scale_rec(lo, c, memo);
                self.mk_node_unchecked(label, h, l)
            }
        };
        memo.insert(d, r);
        r
    }

    /// Replaces the tag of every reachable leaf.
    pub fn retag_leaves(&mut self, d: NodeId, tag: &ActionTag) -> NodeId {
        let mut memo = HashMap::new();
        self.map_leaves(d, &mut memo, &mut |store, leaf| {
            store.mk_leaf_tagged(leaf.value.clone(), Some(tag.clone()))
        })
    }

    /// Adds `tag` to leaves that carry no tag, leaving tagged leaves alone.
    /// Reductions on policy diagrams can introduce plain default leaves;
    /// this restores tag totality.
    pub fn retag_untagged_leaves(&mut self, d: NodeId, tag: &ActionTag) -> NodeId {
        let mut memo = HashMap::new();
        self.map_leaves(d, &mut memo, &mut |store, leaf| {
            let tag = leaf.tag.clone().unwrap_or_else(|| tag.clone());
            store.mk_leaf_tagged(leaf.value.clone(), Some(tag))
        })
    }

    /// Drops all leaf tags, yielding the plain value view of a diagram.
    pub fn strip_tags(&mut self, d: NodeId) -> NodeId {
        if !self.has_tags(d) {
            return d;
        }
        let mut memo = HashMap::new();
        self.map_leaves(d, &mut memo, &mut |store, leaf| {
            store.mk_leaf(leaf.value.clone())
        })
    }

    fn map_leaves(
        &mut self,
        d: NodeId,
        memo: &mut HashMap<NodeId, NodeId>,
        f: &mut dyn FnMut(&mut Store, &Leaf) -> NodeId,
    ) -> NodeId {
        if let Some(&r) = memo.get(&d) {
            return r;
        }
        let r = match self.node(d).clone() {
            Node::Leaf(l) => f(self, &l),
            Node::Inner { label, hi, lo } => {
                let h = self.map_leaves(hi, memo, f);
                let l = self.map_leaves(lo, memo, f);
                self.mk_node_unchecked(label, h, l)
            }
        };
        memo.insert(d, r);
        r
    }

    /// All variables of `d`: those in labels and those in leaf tags.
    pub fn vars(&self, d: NodeId) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut seen = BTreeSet::new();
        self.vars_rec(d, &mut out, &mut seen);
        out
    }

    fn vars_rec(&self, d: NodeId, out: &mut BTreeSet<String>, seen: &mut BTreeSet<NodeId>) {
        if !seen.insert(d) {
            return;
        }
        match self.node(d) {
            Node::Leaf(l) => {
                if let Some(tag) = &l.tag {
                    for t in &tag.args {
                        if let Term::Var(v) = t {
                            out.insert(v.clone());
                        }
                    }
                }
            }
            Node::Inner { label, hi, lo } => {
                for v in label.vars() {
                    out.insert(v.to_string());
                }
                self.vars_rec(*hi, out, seen);
                self.vars_rec(*lo, out, seen);
            }
        }
    }

    /// Constants mentioned in labels or tags of `d`.
    pub fn constants(&self, d: NodeId) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for id in self.reachable(d) {
            match self.node(id) {
                Node::Leaf(l) => {
                    if let Some(tag) = &l.tag {
                        for t in &tag.args {
                            if let Term::Const(c) = t {
                                out.insert(c.clone());
                            }
                        }
                    }
                }
                Node::Inner { label, .. } => {
                    for t in label.terms() {
                        if let Term::Const(c) = t {
                            out.insert(c.clone());
                        }
                    }
                }
            }
        }
        out
    }

    /// Reachable node ids in ascending id order.
    pub fn reachable(&self, d: NodeId) -> Vec<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![d];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            if let Node::Inner { hi, lo, .. } = self.node(n) {
                stack.push(*hi);
                stack.push(*lo);
            }
        }
        seen.into_iter().collect()
    }

    /// Distinct reachable leaf nodes in ascending id order.
    pub fn leaves(&self, d: NodeId) -> Vec<NodeId> {
        self.reachable(d)
            .into_iter()
            .filter(|&n| self.is_leaf(n))
            .collect()
    }

    /// Number of reachable nodes.
    pub fn size(&self, d: NodeId) -> usize {
        self.reachable(d).len()
    }

    pub fn fresh_var(&mut self) -> String {
        self.fresh_counter += 1;
        format!("${}", self.fresh_counter)
    }

    /// Simultaneous substitution of variables by terms in labels and tags,
    /// with re-canonicalization. Fails when a target variable already occurs
    /// free in `d` outside the substitution's domain (variable capture).
    pub fn substitute(
        &mut self,
        d: NodeId,
        subst: &BTreeMap<String, Term>,
    ) -> Result<NodeId, FoddError> {
        if subst.is_empty() {
            return Ok(d);
        }
        let dvars = self.vars(d);
        for target in subst.values() {
            if let Term::Var(v) = target {
                if dvars.contains(v) && !subst.contains_key(v) {
                    return Err(FoddError::Capture { var: v.clone() });
                }
            }
        }
        let mut memo = HashMap::new();
        Ok(self.substitute_rec(d, subst, &mut memo))
    }

    pub(crate) fn substitute_rec(
        &mut self,
        d: NodeId,
        subst: &BTreeMap<String, Term>,
        memo: &mut HashMap<NodeId, NodeId>,
    ) -> NodeId {
        if let Some(&r) = memo.get(&d) {
            return r;
        }
        let r = match self.node(d).clone() {
            Node::Leaf(l) => {
                let tag = l.tag.map(|t| t.apply(subst));
                self.mk_leaf_tagged(l.value, tag)
            }
            Node::Inner { label, hi, lo } => {
                let h = self.substitute_rec(hi, subst, memo);
                let l = self.substitute_rec(lo, subst, memo);
                self.branch(label.apply(subst), h, l)
            }
        };
        memo.insert(d, r);
        r
    }

    /// Renames every variable of `d` not in `reserved` to a globally fresh
    /// name. The result is semantically identical up to renaming.
    pub fn standardize_apart(&mut self, d: NodeId, reserved: &BTreeSet<String>) -> NodeId {
        let mut subst = BTreeMap::new();
        for v in self.vars(d) {
            if !reserved.contains(&v) {
                let fresh = self.fresh_var();
                subst.insert(v, Term::var(fresh));
            }
        }
        self.substitute(d, &subst)
            .expect("fresh names cannot capture")
    }

    /// Renames variables to a canonical `v01, v02, ...` scheme following
    /// their first occurrence in a depth-first (true edge first) traversal.
    /// Renaming can change the label order and therefore the traversal, so
    /// the pass iterates until the naming is stable.
    pub fn canonical_rename(&mut self, d: NodeId) -> NodeId {
        self.canonical_rename_keep(d, &BTreeSet::new())
    }

    /// Canonical renaming that leaves the variables in `keep` untouched
    /// (used for shared action parameters).
    pub fn canonical_rename_keep(&mut self, d: NodeId, keep: &BTreeSet<String>) -> NodeId {
        let mut current = d;
        let mut seen = BTreeSet::new();
        for _ in 0..8 {
            if !seen.insert(current) {
                break;
            }
            let order: Vec<String> = self
                .occurrence_order(current)
                .into_iter()
                .filter(|v| !keep.contains(v))
                .collect();
            let width = if order.len() >= 100 { 3 } else { 2 };
            let mut subst = BTreeMap::new();
            let mut identity = true;
            let mut counter = 0usize;
            for v in &order {
                let name = loop {
                    counter += 1;
                    let candidate = format!("v{:0width$}", counter, width = width);
                    if !keep.contains(&candidate) {
                        break candidate;
                    }
                };
                if *v != name {
                    identity = false;
                }
                subst.insert(v.clone(), Term::var(name));
            }
            if identity {
                break;
            }
            current = self
                .substitute(current, &subst)
                .expect("total renaming cannot capture");
        }
        current
    }

    fn occurrence_order(&self, d: NodeId) -> Vec<String> {
        let mut order = Vec::new();
        let mut seen_vars = BTreeSet::new();
        let mut seen_nodes = BTreeSet::new();
        self.occurrence_rec(d, &mut order, &mut seen_vars, &mut seen_nodes);
        order
    }

    fn occurrence_rec(
        &self,
        d: NodeId,
        order: &mut Vec<String>,
        seen_vars: &mut BTreeSet<String>,
        seen_nodes: &mut BTreeSet<NodeId>,
    ) {
        if !seen_nodes.insert(d) {
            return;
        }
        match self.node(d) {
            Node::Leaf(l) => {
                if let Some(tag) = &l.tag {
                    for t in &tag.args {
                        if let Term::Var(v) = t {
                            if seen_vars.insert(v.clone()) {
                                order.push(v.clone());
                            }
                        }
                    }
                }
            }
            Node::Inner { label, hi, lo } => {
                for v in label.vars() {
                    if seen_vars.insert(v.to_string()) {
                        order.push(v.to_string());
                    }
                }
                self.occurrence_rec(*hi, order, seen_vars, seen_nodes);
                self.occurrence_rec(*lo, order, seen_vars, seen_nodes);
            }
        }
    }

    /// Verifies the strict path-ordering and canonicity invariants for every
    /// stored node. Intended for tests and debug builds.
    pub fn audit_ordering(&self) -> Result<(), FoddError> {
        for entry in &self.entries {
            if let Node::Inner { label, hi, lo } = &entry.node {
                if hi == lo {
                    return Err(FoddError::OrderingViolation {
                        parent: label.to_string(),
                        child: "<identical children>".to_string(),
                    });
                }
                for child in [hi, lo] {
                    if let Some(cl) = self.root_label(*child) {
                        if *label >= *cl {
                            return Err(FoddError::OrderingViolation {
                                parent: label.to_string(),
                                child: cl.to_string(),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
