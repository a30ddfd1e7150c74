//! Interpretations, valuations and max-aggregation evaluation.
//!
//! An interpretation is a finite relational state: an object universe, a
//! constant map and a set of true ground atoms. A diagram is evaluated under
//! a valuation of its variables by walking a single root-to-leaf path; the
//! value on an interpretation aggregates over all valuations by maximum.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::label::Label;
use crate::store::{Node, NodeId, Store};
use crate::term::Term;
use crate::value::Value;
use crate::FoddError;

/// Object identifiers; universes are conventionally `1..=n`.
pub type Obj = u32;

/// A variable binding.
pub type Valuation = BTreeMap<String, Obj>;

/// A finite relational state.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Interpretation {
    pub universe: Vec<Obj>,
    pub constants: BTreeMap<String, Obj>,
    pub atoms: BTreeSet<(String, Vec<Obj>)>,
}

impl Interpretation {
    pub fn new(universe_size: u32) -> Interpretation {
        Interpretation {
            universe: (1..=universe_size).collect(),
            constants: BTreeMap::new(),
            atoms: BTreeSet::new(),
        }
    }

    pub fn with_atoms(universe_size: u32, atoms: &[(&str, &[Obj])]) -> Interpretation {
        let mut i = Interpretation::new(universe_size);
        for (p, args) in atoms {
            i.add(p, args.to_vec());
        }
        i
    }

    pub fn add(&mut self, pred: &str, args: Vec<Obj>) {
        self.atoms.insert((pred.to_string(), args));
    }

    pub fn holds(&self, pred: &str, args: &[Obj]) -> bool {
        self.atoms.contains(&(pred.to_string(), args.to_vec()))
    }

    fn resolve(&self, term: &Term, z: &Valuation) -> Result<Obj, FoddError> {
        match term {
            Term::Var(v) => z
                .get(v)
                .copied()
                .ok_or_else(|| FoddError::UnboundVariable(v.clone())),
            Term::Const(c) => self
                .constants
                .get(c)
                .copied()
                .ok_or_else(|| FoddError::UnmappedConstant(c.clone())),
        }
    }

    /// Truth of a label under a (total enough) valuation.
    pub fn label_holds(&self, label: &Label, z: &Valuation) -> Result<bool, FoddError> {
        match label {
            Label::Atom { pred, args } => {
                let objs = args
                    .iter()
                    .map(|t| self.resolve(t, z))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(self.holds(pred, &objs))
            }
            Label::Equality(a, b) => Ok(self.resolve(a, z)? == self.resolve(b, z)?),
        }
    }

    /// Compact listing like `{p1(1), q2(2)}` for diagnostics.
    pub fn describe(&self) -> String {
        let mut parts: Vec<String> = self
            .atoms
            .iter()
            .map(|(p, args)| {
                let a: Vec<String> = args.iter().map(|o| o.to_string()).collect();
                format!("{}({})", p, a.join(","))
            })
            .collect();
        if parts.is_empty() {
            parts.push("∅".to_string());
        }
        format!("{{{}}}", parts.join(", "))
    }
}

/// A predicate vocabulary plus declared constants; drives interpretation
/// enumeration for semantic checks and the ground oracle.
#[derive(Clone, Debug, Default)]
pub struct Vocabulary {
    pub predicates: Vec<(String, usize)>,
    pub constants: Vec<String>,
}

impl Vocabulary {
    pub fn new(predicates: &[(&str, usize)]) -> Vocabulary {
        Vocabulary {
            predicates: predicates
                .iter()
                .map(|(p, a)| (p.to_string(), *a))
                .collect(),
            constants: Vec::new(),
        }
    }

    /// All ground atoms over `1..=n`, in (declaration, tuple-lex) order.
    pub fn ground_atoms(&self, n: u32) -> Vec<(String, Vec<Obj>)> {
        let mut out = Vec::new();
        for (pred, arity) in &self.predicates {
            for tuple in tuples(n, *arity) {
                out.push((pred.clone(), tuple));
            }
        }
        out
    }

    /// Enumerates every interpretation over `1..=n`: all subsets of ground
    /// atoms crossed with all constant maps, in a deterministic order.
    /// Refuses (rather than truncates) when the atom count exceeds `budget`.
    pub fn interpretations(&self, n: u32, budget: usize) -> Result<Vec<Interpretation>, FoddError> {
        let atoms = self.ground_atoms(n);
        if atoms.len() > budget {
            return Err(FoddError::BudgetExceeded {
                atoms: atoms.len(),
                budget,
            });
        }
        let const_maps = constant_maps(&self.constants, n);
        let mut out = Vec::with_capacity(const_maps.len() << atoms.len());
        for constants in &const_maps {
            for mask in 0u64..(1u64 << atoms.len()) {
                let mut i = Interpretation::new(n);
                i.constants = constants.clone();
                for (bit, atom) in atoms.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        i.atoms.insert(atom.clone());
                    }
                }
                out.push(i);
            }
        }
        Ok(out)
    }
}

/// All `arity`-tuples over `1..=n` in lexicographic order.
pub fn tuples(n: u32, arity: usize) -> Vec<Vec<Obj>> {
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        let mut next = Vec::new();
        for prefix in &out {
            for o in 1..=n {
                let mut t = prefix.clone();
                t.push(o);
                next.push(t);
            }
        }
        out = next;
    }
    out
}

fn constant_maps(constants: &[String], n: u32) -> Vec<BTreeMap<String, Obj>> {
    let mut out = vec![BTreeMap::new()];
    for c in constants {
        let mut next = Vec::new();
        for prefix in &out {
            for o in 1..=n {
                let mut m = prefix.clone();
                m.insert(c.clone(), o);
                next.push(m);
            }
        }
        out = next;
    }
    out
}

/// Maximal size of `|universe|^{#vars}` for which aggregation enumerates
/// full valuations in lexicographic order; beyond it a depth-first search
/// binds only path-relevant variables.
const ENUM_LIMIT: u64 = 4096;

impl Store {
    /// Follows the unique path selected by `(i, z)` and returns the leaf.
    pub fn eval_leaf(
        &self,
        d: NodeId,
        i: &Interpretation,
        z: &Valuation,
    ) -> Result<NodeId, FoddError> {
        let mut cur = d;
        loop {
            match self.node(cur) {
                Node::Leaf(_) => return Ok(cur),
                Node::Inner { label, hi, lo } => {
                    cur = if i.label_holds(label, z)? { *hi } else { *lo };
                }
            }
        }
    }

    /// The value of `d` under interpretation `i` and valuation `z`.
    pub fn evaluate(
        &self,
        d: NodeId,
        i: &Interpretation,
        z: &Valuation,
    ) -> Result<Value, FoddError> {
        let leaf = self.eval_leaf(d, i, z)?;
        Ok(self.leaf(leaf).expect("eval ends at a leaf").value.clone())
    }

    /// Max-aggregated value of `d` on `i`.
    pub fn map_max(&self, d: NodeId, i: &Interpretation) -> Result<Value, FoddError> {
        Ok(self.map_best(d, i)?.0)
    }

    /// Max-aggregated value with some variables pre-bound.
    pub fn map_max_fixed(
        &self,
        d: NodeId,
        i: &Interpretation,
        fixed: &Valuation,
    ) -> Result<Value, FoddError> {
        Ok(self.map_best_fixed(d, i, fixed)?.0)
    }

    /// The best `(value, leaf, valuation)` triple on `i`: maximal value,
    /// then smallest leaf id, then the earliest valuation in enumeration
    /// order. Valuations are enumerated lexicographically (variables in name
    /// order, objects in universe order) when the space is small, otherwise
    /// by a depth-first search that binds variables as the walked paths
    /// reach them — both orders are fixed, so the choice is deterministic.
    pub fn map_best(
        &self,
        d: NodeId,
        i: &Interpretation,
    ) -> Result<(Value, NodeId, Valuation), FoddError> {
        self.map_best_fixed(d, i, &Valuation::new())
    }

    pub fn map_best_fixed(
        &self,
        d: NodeId,
        i: &Interpretation,
        fixed: &Valuation,
    ) -> Result<(Value, NodeId, Valuation), FoddError> {
        let vars: Vec<String> = self
            .vars(d)
            .into_iter()
            .filter(|v| !fixed.contains_key(v))
            .collect();
        if vars.is_empty() {
            let leaf = self.eval_leaf(d, i, fixed)?;
            let value = self.leaf(leaf).expect("leaf").value.clone();
            return Ok((value, leaf, fixed.clone()));
        }
        if i.universe.is_empty() {
            return Err(FoddError::EmptyUniverse { vars: vars.len() });
        }
        let space = (i.universe.len() as u64).checked_pow(vars.len() as u32);
        match space {
            Some(sz) if sz <= ENUM_LIMIT => self.map_best_enum(d, i, fixed, &vars),
            _ => self.map_best_search(d, i, fixed),
        }
    }

    fn map_best_enum(
        &self,
        d: NodeId,
        i: &Interpretation,
        fixed: &Valuation,
        vars: &[String],
    ) -> Result<(Value, NodeId, Valuation), FoddError> {
        let mut best: Option<(Value, NodeId, Valuation)> = None;
        let mut idx = vec![0usize; vars.len()];
        loop {
            let mut z = fixed.clone();
            for (v, &k) in vars.iter().zip(&idx) {
                z.insert(v.clone(), i.universe[k]);
            }
            let leaf = self.eval_leaf(d, i, &z)?;
            let value = self.leaf(leaf).expect("leaf").value.clone();
            let better = match &best {
                None => true,
                Some((bv, bl, _)) => value > *bv || (value == *bv && leaf < *bl),
            };
            if better {
                best = Some((value, leaf, z));
            }
            // Advance the rightmost index (lexicographic order).
            let mut pos = vars.len();
            loop {
                if pos == 0 {
                    return Ok(best.expect("at least one valuation"));
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < i.universe.len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }

    fn map_best_search(
        &self,
        d: NodeId,
        i: &Interpretation,
        fixed: &Valuation,
    ) -> Result<(Value, NodeId, Valuation), FoddError> {
        // Variables relevant below each node, for memo keys.
        let mut below: HashMap<NodeId, BTreeSet<String>> = HashMap::new();
        for n in self.reachable(d) {
            let mut vars = BTreeSet::new();
            match self.node(n) {
                Node::Leaf(l) => {
                    if let Some(tag) = &l.tag {
                        for t in &tag.args {
                            if let Term::Var(v) = t {
                                vars.insert(v.clone());
                            }
                        }
                    }
                }
                Node::Inner { label, hi, lo } => {
                    for v in label.vars() {
                        vars.insert(v.to_string());
                    }
                    vars.extend(below[hi].iter().cloned());
                    vars.extend(below[lo].iter().cloned());
                }
            }
            below.insert(n, vars);
        }
        let mut memo = HashMap::new();
        let mut z = fixed.clone();
        let (value, leaf, witness) = self.search_rec(d, i, &mut z, &below, &mut memo)?;
        let mut full = fixed.clone();
        full.extend(witness);
        Ok((value, leaf, full))
    }

    /// Best `(value, leaf, witness-for-below-vars)` of the subdiagram at `d`
    /// given the already-bound variables that are relevant below `d`.
    #[allow(clippy::type_complexity)]
    fn search_rec(
        &self,
        d: NodeId,
        i: &Interpretation,
        z: &mut Valuation,
        below: &HashMap<NodeId, BTreeSet<String>>,
        memo: &mut HashMap<(NodeId, Vec<(String, Obj)>), (Value, NodeId, Valuation)>,
    ) -> Result<(Value, NodeId, Valuation), FoddError> {
        let key: Vec<(String, Obj)> = below[&d]
            .iter()
            .filter_map(|v| z.get(v).map(|&o| (v.clone(), o)))
            .collect();
        if let Some(hit) = memo.get(&(d, key.clone())) {
            return Ok(hit.clone());
        }
        let result = match self.node(d) {
            Node::Leaf(l) => {
                // Bind tag-only variables to the first object so the witness
                // instantiates the action deterministically.
                let mut witness = Valuation::new();
                if let Some(tag) = &l.tag {
                    for t in &tag.args {
                        if let Term::Var(v) = t {
                            let obj = z.get(v).copied().unwrap_or(i.universe[0]);
                            witness.insert(v.clone(), obj);
                        }
                    }
                }
                (l.value.clone(), d, witness)
            }
            Node::Inner { label, hi, lo } => {
                let unbound: Vec<String> = {
                    let mut seen = BTreeSet::new();
                    label
                        .vars()
                        .iter()
                        .filter(|v| !z.contains_key(**v) && seen.insert(v.to_string()))
                        .map(|v| v.to_string())
                        .collect()
                };
                let (hi, lo) = (*hi, *lo);
                let label = label.clone();
                let mut best: Option<(Value, NodeId, Valuation)> = None;
                self.bind_and_recurse(
                    d, &label, hi, lo, i, z, below, memo, &unbound, 0, &mut best,
                )?;
                best.expect("every binding reaches a leaf")
            }
        };
        memo.insert((d, key), result.clone());
        Ok(result)
    }

    #[allow(clippy::too_many_arguments)]
    #[allow(clippy::type_complexity)]
    fn bind_and_recurse(
        &self,
        d: NodeId,
        label: &crate::label::Label,
        hi: NodeId,
        lo: NodeId,
        i: &Interpretation,
        z: &mut Valuation,
        below: &HashMap<NodeId, BTreeSet<String>>,
        memo: &mut HashMap<(NodeId, Vec<(String, Obj)>), (Value, NodeId, Valuation)>,
        unbound: &[String],
        k: usize,
        best: &mut Option<(Value, NodeId, Valuation)>,
    ) -> Result<(), FoddError> {
        if k == unbound.len() {
            let next = if i.label_holds(label, z)? { hi } else { lo };
            let (value, leaf, mut witness) = self.search_rec(next, i, z, below, memo)?;
            // The witness must cover this node's variables too.
            for v in label.vars() {
                if let Some(&o) = z.get(v) {
                    witness.insert(v.to_string(), o);
                }
            }
            let better = match &*best {
                None => true,
                Some((bv, bl, _)) => value > *bv || (value == *bv && leaf < *bl),
            };
            if better {
                *best = Some((value, leaf, witness));
            }
            return Ok(());
        }
        for &obj in &i.universe {
            z.insert(unbound[k].clone(), obj);
            self.bind_and_recurse(d, label, hi, lo, i, z, below, memo, unbound, k + 1, best)?;
            z.remove(&unbound[k]);
        }
        Ok(())
    }

    /// True iff `map_max` agrees on every interpretation of the vocabulary
    /// over universe sizes `1..=max_universe`. Refuses oversized vocabularies
    /// instead of silently truncating.
    pub fn semantic_equal(
        &self,
        a: NodeId,
        b: NodeId,
        vocab: &Vocabulary,
        max_universe: u32,
        budget: usize,
    ) -> Result<bool, FoddError> {
        Ok(self
            .semantic_counterexample(a, b, vocab, max_universe, budget)?
            .is_none())
    }

    /// First interpretation on which the two maps disagree, if any.
    pub fn semantic_counterexample(
        &self,
        a: NodeId,
        b: NodeId,
        vocab: &Vocabulary,
        max_universe: u32,
        budget: usize,
    ) -> Result<Option<Interpretation>, FoddError> {
        for n in 1..=max_universe {
            for i in vocab.interpretations(n, budget)? {
                if self.map_max(a, &i)? != self.map_max(b, &i)? {
                    return Ok(Some(i));
                }
            }
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Label;

    fn unary(p: &str, v: &str) -> Label {
        Label::atom(p, vec![Term::var(v)])
    }

    /// The two-variable diagram used in the walkthrough of evaluation:
    /// reachable value 1 exactly when some x has q(x) but not p(x) and some
    /// y has h(y).
    fn sample_diagram(s: &mut Store) -> NodeId {
        let one = s.mk_leaf(Value::one());
        let zero = s.zero_leaf();
        let qx = s.mk_node(unary("q", "x"), one, zero).unwrap();
        let px = s.branch(unary("p", "x"), zero, qx);
        s.branch(unary("h", "y"), px, zero)
    }

    fn sample_interp() -> Interpretation {
        Interpretation::with_atoms(3, &[("p", &[1]), ("q", &[2]), ("h", &[3])])
    }

    #[test]
    fn evaluation_follows_single_paths() {
        let mut s = Store::new();
        let d = sample_diagram(&mut s);
        let i = sample_interp();
        // x/1 chooses p(1) which holds, so value 0 whatever y is.
        for y in 1..=3 {
            let z: Valuation = [("x".to_string(), 1), ("y".to_string(), y)].into();
            assert_eq!(s.evaluate(d, &i, &z).unwrap(), Value::zero());
        }
        let z: Valuation = [("x".to_string(), 2), ("y".to_string(), 3)].into();
        assert_eq!(s.evaluate(d, &i, &z).unwrap(), Value::one());
    }

    #[test]
    fn map_max_aggregates_over_valuations() {
        let mut s = Store::new();
        let d = sample_diagram(&mut s);
        let i = sample_interp();
        assert_eq!(s.map_max(d, &i).unwrap(), Value::one());
    }

    #[test]
    fn leaf_only_diagram_ignores_valuation() {
        let mut s = Store::new();
        let seven = s.mk_leaf(Value::from_int(7));
        let i = Interpretation::new(2);
        assert_eq!(s.map_max(seven, &i).unwrap(), Value::from_int(7));
    }

    #[test]
    fn unbound_variable_is_an_error() {
        let mut s = Store::new();
        let d = sample_diagram(&mut s);
        let i = sample_interp();
        let z: Valuation = [("x".to_string(), 2)].into();
        // y is needed on this path.
        assert!(matches!(
            s.evaluate(d, &i, &z),
            Err(FoddError::UnboundVariable(v)) if v == "y"
        ));
    }

    #[test]
    fn empty_universe_with_variables_is_an_error() {
        let mut s = Store::new();
        let d = sample_diagram(&mut s);
        let i = Interpretation::new(0);
        assert!(matches!(
            s.map_max(d, &i),
            Err(FoddError::EmptyUniverse { .. })
        ));
    }

    #[test]
    fn enumeration_and_search_agree() {
        // Force both strategies over the same diagram and states.
        let mut s = Store::new();
        let d = sample_diagram(&mut s);
        for mask in 0..64u32 {
            let mut i = Interpretation::new(2);
            let atoms = Vocabulary::new(&[("h", 1), ("p", 1), ("q", 1)]).ground_atoms(2);
            for (bit, atom) in atoms.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    i.atoms.insert(atom.clone());
                }
            }
            let via_enum = s
                .map_best_enum(
                    d,
                    &i,
                    &Valuation::new(),
                    &["x".to_string(), "y".to_string()],
                )
                .unwrap();
            let via_search = s.map_best_search(d, &i, &Valuation::new()).unwrap();
            assert_eq!(via_enum.0, via_search.0, "values must agree");
        }
    }

    #[test]
    fn budget_refusal_is_explicit() {
        let vocab = Vocabulary::new(&[("p", 3), ("q", 3)]);
        // 2 * 3^3 = 54 atoms > budget 12.
        assert!(matches!(
            vocab.interpretations(3, 12),
            Err(FoddError::BudgetExceeded { atoms: 54, budget: 12 })
        ));
    }
}
