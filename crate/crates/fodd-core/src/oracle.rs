//! Exact ground-MDP reference.
//!
//! For a small universe this module grounds a domain into explicit
//! state/action/transition/reward tables, solves the flat MDP by value
//! iteration in floating point, and compares symbolic diagrams against the
//! tables state by state. Successor states are computed by evaluating each
//! TVD directly under a ground valuation, which is deliberately independent
//! of the symbolic regression path it is used to check.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::domain::{DomainError, DomainSpec};
use crate::eval::{tuples, Interpretation, Obj, Valuation};
use crate::policy::GroundAction;
use crate::store::{NodeId, Store};
use crate::FoddError;

/// Explicit MDP tables over all interpretations of a fixed universe size.
pub struct GroundMdp {
    pub states: Vec<Interpretation>,
    pub actions: Vec<GroundAction>,
    /// `transitions[s][a]` is a sparse distribution over successor indices.
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    pub rewards: Vec<f64>,
    pub gamma: f64,
    pub absorbing: bool,
    /// In absorbing mode, states whose reward is the goal reward.
    pub goal: Vec<bool>,
    atom_bits: BTreeMap<(String, Vec<Obj>), usize>,
    states_per_const_map: usize,
}

impl GroundMdp {
    /// Index of the state reached from `s` by replacing its atom set.
    fn successor_index(&self, from: usize, atoms: &[bool]) -> usize {
        let const_block = from / self.states_per_const_map;
        let mut mask = 0usize;
        for (bit, &on) in atoms.iter().enumerate() {
            if on {
                mask |= 1 << bit;
            }
        }
        const_block * self.states_per_const_map + mask
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn action_index(&self, a: &GroundAction) -> Option<usize> {
        self.actions.iter().position(|x| x == a)
    }

    /// One-step backup of `values` at state `s` under ground action `a`,
    /// using the same absorbing convention as the symbolic Q-functions.
    pub fn backup(&self, s: usize, a: usize, values: &[f64]) -> f64 {
        let future: f64 = self.transitions[s][a]
            .iter()
            .map(|&(next, p)| p * values[next])
            .sum();
        if self.absorbing {
            self.rewards[s].max(self.gamma * future)
        } else {
            self.rewards[s] + self.gamma * future
        }
    }

    /// Exact value iteration to the residual implied by `tol`. Returns the
    /// value table and the greedy policy (ties to the first ground action).
    pub fn exact_solve(&self, tol: f64) -> (Vec<f64>, Vec<usize>) {
        let threshold = tol * (1.0 - self.gamma) / (2.0 * self.gamma);
        let mut values = vec![0.0; self.states.len()];
        for _ in 0..100_000 {
            let mut next = vec![0.0; self.states.len()];
            let mut residual = 0.0f64;
            for s in 0..self.states.len() {
                let best = (0..self.actions.len())
                    .map(|a| self.backup(s, a, &values))
                    .fold(f64::NEG_INFINITY, f64::max);
                next[s] = best;
                residual = residual.max((best - values[s]).abs());
            }
            values = next;
            if residual <= threshold {
                break;
            }
        }
        let policy = (0..self.states.len())
            .map(|s| {
                (0..self.actions.len())
                    .map(|a| (a, self.backup(s, a, &values)))
                    .fold((0usize, f64::NEG_INFINITY), |acc, (a, v)| {
                        if v > acc.1 {
                            (a, v)
                        } else {
                            acc
                        }
                    })
                    .0
            })
            .collect();
        (values, policy)
    }

    /// Iterative evaluation of a fixed choice of ground action per state.
    pub fn evaluate_policy(&self, choice: &[usize], tol: f64) -> Vec<f64> {
        let threshold = tol * (1.0 - self.gamma) / (2.0 * self.gamma);
        let mut values = vec![0.0; self.states.len()];
        for _ in 0..100_000 {
            let mut residual = 0.0f64;
            let mut next = vec![0.0; self.states.len()];
            for s in 0..self.states.len() {
                next[s] = self.backup(s, choice[s], &values);
                residual = residual.max((next[s] - values[s]).abs());
            }
            values = next;
            if residual <= threshold {
                break;
            }
        }
        values
    }

    /// Textual dump of states, values and a policy for golden comparisons.
    pub fn dump(&self, values: &[f64], policy: &[usize]) -> String {
        let mut out = String::new();
        for (s, state) in self.states.iter().enumerate() {
            let action = &self.actions[policy[s]];
            let _ = writeln!(
                out,
                "state {s}: {} value {:.9} action {}",
                state.describe(),
                values[s],
                action
            );
        }
        out
    }
}

/// All interpretations of the domain's vocabulary over universe `1..=n`,
/// in a deterministic order. Refuses oversized vocabularies.
pub fn enumerate_states(
    spec: &DomainSpec,
    n: u32,
    budget: usize,
) -> Result<Vec<Interpretation>, FoddError> {
    spec.vocabulary().interpretations(n, budget)
}

/// One-step successor distribution of a ground action, computed directly
/// from the TVDs.
pub fn transition(
    store: &mut Store,
    spec: &DomainSpec,
    s: &Interpretation,
    a: &GroundAction,
) -> Result<Vec<(Interpretation, f64)>, DomainError> {
    let action = spec
        .action(&a.action)
        .ok_or_else(|| DomainError::Parse {
            line: 0,
            col: 0,
            message: format!("unknown action `{}`", a.action),
        })?
        .clone();
    if action.params.len() != a.args.len() {
        return Err(DomainError::ArityMismatch {
            name: a.action.clone(),
            expected: action.params.len(),
            got: a.args.len(),
            line: 0,
            col: 0,
        });
    }
    let mut z = Valuation::new();
    for (p, o) in action.params.iter().zip(&a.args) {
        z.insert(p.clone(), *o);
    }
    let mut out: Vec<(Interpretation, f64)> = Vec::new();
    for (j, alt) in action.alternatives.iter().enumerate() {
        let p = store
            .evaluate(alt.prob, s, &z)
            .map_err(DomainError::Kernel)?
            .to_f64();
        if p == 0.0 {
            continue;
        }
        let mut next = Interpretation::new(0);
        next.universe = s.universe.clone();
        next.constants = s.constants.clone();
        for pred in &spec.predicates {
            let tvd = action.tvd_for(store, j, pred);
            for args in tuples(s.universe.len() as u32, pred.arity) {
                let mut zz = z.clone();
                for (pp, o) in tvd.pred_params.iter().zip(&args) {
                    zz.insert(pp.clone(), *o);
                }
                let truth = store
                    .evaluate(tvd.diagram, s, &zz)
                    .map_err(DomainError::Kernel)?;
                if truth == crate::value::Value::one() {
                    next.add(&pred.name, args);
                }
            }
        }
        match out.iter_mut().find(|(i, _)| *i == next) {
            Some((_, q)) => *q += p,
            None => out.push((next, p)),
        }
    }
    Ok(out)
}

/// Grounds the domain over universe `1..=n` into explicit tables.
pub fn build_ground_mdp(
    store: &mut Store,
    spec: &DomainSpec,
    n: u32,
    budget: usize,
) -> Result<GroundMdp, DomainError> {
    let vocab = spec.vocabulary();
    let atoms = vocab.ground_atoms(n);
    let states = vocab.interpretations(n, budget).map_err(DomainError::Kernel)?;
    let states_per_const_map = 1usize << atoms.len();
    let mut atom_bits = BTreeMap::new();
    for (bit, atom) in atoms.iter().enumerate() {
        atom_bits.insert(atom.clone(), bit);
    }

    let mut actions = Vec::new();
    for action in &spec.actions {
        for args in tuples(n, action.params.len()) {
            actions.push(GroundAction {
                action: action.name.clone(),
                args,
            });
        }
    }

    let gamma = spec.discount.to_f64();
    let mut rewards = Vec::with_capacity(states.len());
    for s in &states {
        rewards.push(store.map_max(spec.reward, s).map_err(DomainError::Kernel)?.to_f64());
    }
    let goal: Vec<bool> = rewards
        .iter()
        .map(|&r| spec.absorbing_goal && r > 0.0)
        .collect();

    let mut mdp = GroundMdp {
        states,
        actions,
        transitions: Vec::new(),
        rewards,
        gamma,
        absorbing: spec.absorbing_goal,
        goal,
        atom_bits,
        states_per_const_map,
    };

    let mut transitions = Vec::with_capacity(mdp.states.len());
    for s_idx in 0..mdp.states.len() {
        let mut per_action = Vec::with_capacity(mdp.actions.len());
        for a in &mdp.actions.clone() {
            if mdp.absorbing && mdp.goal[s_idx] {
                per_action.push(vec![(s_idx, 1.0)]);
                continue;
            }
            let dist = transition(store, spec, &mdp.states[s_idx], a)?;
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(dist.len());
            for (next, p) in dist {
                let mut bits = vec![false; mdp.atom_bits.len()];
                for atom in &next.atoms {
                    bits[mdp.atom_bits[atom]] = true;
                }
                let idx = mdp.successor_index(s_idx, &bits);
                match row.iter_mut().find(|(i, _)| *i == idx) {
                    Some((_, q)) => *q += p,
                    None => row.push((idx, p)),
                }
            }
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(DomainError::ProbabilityNotNormalized {
                    action: a.action.clone(),
                    detail: format!(
                        "ground transition row sums to {total} on {}",
                        mdp.states[s_idx].describe()
                    ),
                });
            }
            per_action.push(row);
        }
        transitions.push(per_action);
    }
    mdp.transitions = transitions;
    Ok(mdp)
}

/// Per-state comparison of a value diagram against a ground value table.
pub struct CompareReport {
    pub max_abs_diff: f64,
    pub worst_state: Option<usize>,
    /// States whose difference exceeds the tolerance.
    pub failures: Vec<(usize, f64, f64)>,
}

pub fn compare(
    store: &Store,
    v: NodeId,
    m: &GroundMdp,
    table: &[f64],
    tol: f64,
) -> Result<CompareReport, FoddError> {
    let mut report = CompareReport {
        max_abs_diff: 0.0,
        worst_state: None,
        failures: Vec::new(),
    };
    for (s, state) in m.states.iter().enumerate() {
        let symbolic = store.map_max(v, state)?.to_f64();
        let diff = (symbolic - table[s]).abs();
        if diff > report.max_abs_diff {
            report.max_abs_diff = diff;
            report.worst_state = Some(s);
        }
        if diff > tol {
            report.failures.push((s, symbolic, table[s]));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::parse::parse_domain;

    fn load(name: &str) -> (Store, DomainSpec) {
        let path = format!(
            "{}/../../domains/{name}.domain",
            env!("CARGO_MANIFEST_DIR")
        );
        let text = std::fs::read_to_string(path).unwrap();
        let mut store = Store::new();
        let spec = parse_domain(&mut store, &text).unwrap();
        (store, spec)
    }

    fn state_index(m: &GroundMdp, atoms: &[(&str, &[Obj])]) -> usize {
        let n = m.states[0].universe.len() as u32;
        let want = Interpretation::with_atoms(n, atoms);
        m.states.iter().position(|s| *s == want).unwrap()
    }

    #[test]
    fn state_counts_match_the_vocabulary() {
        let (_, spec1) = load("two_step_goal");
        assert_eq!(enumerate_states(&spec1, 1, 12).unwrap().len(), 16);
        assert_eq!(enumerate_states(&spec1, 2, 12).unwrap().len(), 256);
        let (_, spec2) = load("chain_effects");
        assert_eq!(enumerate_states(&spec2, 1, 12).unwrap().len(), 32);
    }

    #[test]
    fn budget_refusal_reports_atom_count() {
        let (_, spec) = load("chain_effects");
        // 5 unary predicates over 3 objects = 15 atoms > 12.
        assert!(matches!(
            enumerate_states(&spec, 3, 12),
            Err(FoddError::BudgetExceeded { atoms: 15, budget: 12 })
        ));
    }

    #[test]
    fn deterministic_effect_fires_where_enabled() {
        let (mut store, spec) = load("two_step_goal");
        let s = Interpretation::with_atoms(1, &[("q1", &[1])]);
        let a = GroundAction {
            action: "A1".into(),
            args: vec![1],
        };
        let dist = transition(&mut store, &spec, &s, &a).unwrap();
        assert_eq!(dist.len(), 1);
        let expected = Interpretation::with_atoms(1, &[("q1", &[1]), ("p1", &[1])]);
        assert_eq!(dist[0].0, expected);
        assert!((dist[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noop_keeps_the_state() {
        let (mut store, spec) = load("two_step_goal");
        let s = Interpretation::with_atoms(2, &[("p1", &[2]), ("q2", &[1])]);
        let a = GroundAction {
            action: "noop".into(),
            args: vec![],
        };
        let dist = transition(&mut store, &spec, &s, &a).unwrap();
        assert_eq!(dist, vec![(s, 1.0)]);
    }

    #[test]
    fn cascading_effects_fire_together() {
        let (mut store, spec) = load("chain_effects");
        let s = Interpretation::with_atoms(1, &[("q2", &[1]), ("p2", &[1])]);
        let a = GroundAction {
            action: "A2".into(),
            args: vec![1],
        };
        let dist = transition(&mut store, &spec, &s, &a).unwrap();
        let expected =
            Interpretation::with_atoms(1, &[("q2", &[1]), ("p2", &[1]), ("p3", &[1])]);
        assert_eq!(dist, vec![(expected, 1.0)]);
    }

    #[test]
    fn noisy_action_splits_probability() {
        let (mut store, spec) = load("two_step_noisy");
        let s = Interpretation::with_atoms(1, &[("q1", &[1])]);
        let a = GroundAction {
            action: "A1".into(),
            args: vec![1],
        };
        let mut dist = transition(&mut store, &spec, &s, &a).unwrap();
        dist.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        assert_eq!(dist.len(), 2);
        assert!((dist[0].1 - 0.3).abs() < 1e-12, "fizzle keeps the state");
        assert_eq!(dist[0].0, s);
        assert!((dist[1].1 - 0.7).abs() < 1e-12);
        assert!(dist[1].0.holds("p1", &[1]));
    }

    #[test]
    fn transition_rows_are_stochastic() {
        let (mut store, spec) = load("two_step_noisy");
        let m = build_ground_mdp(&mut store, &spec, 1, 12).unwrap();
        for s in 0..m.state_count() {
            for a in 0..m.actions.len() {
                let total: f64 = m.transitions[s][a].iter().map(|(_, p)| p).sum();
                assert!((total - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn absorbing_goal_states_self_loop_and_hold_the_reward() {
        let (mut store, spec) = load("two_step_goal");
        let m = build_ground_mdp(&mut store, &spec, 1, 12).unwrap();
        let goal = state_index(&m, &[("p1", &[1]), ("p2", &[1])]);
        assert!(m.goal[goal]);
        for a in 0..m.actions.len() {
            assert_eq!(m.transitions[goal][a], vec![(goal, 1.0)]);
        }
        let (values, _) = m.exact_solve(1e-9);
        assert!((values[goal] - 10.0).abs() < 1e-7, "goal keeps exactly R");
    }

    #[test]
    fn optimal_values_fall_into_discounted_classes() {
        // This solver is the reference for the symbolic layer; pin its
        // output against the analytically known geometric values 10 * g^k.
        let (mut store, spec) = load("two_step_goal");
        let m = build_ground_mdp(&mut store, &spec, 1, 12).unwrap();
        let (values, _) = m.exact_solve(1e-9);
        let cases: [(&[(&str, &[Obj])], f64); 5] = [
            (&[("p1", &[1]), ("p2", &[1])], 10.0),
            (&[("p1", &[1]), ("q2", &[1])], 9.0),
            (&[("p2", &[1]), ("q1", &[1])], 9.0),
            (&[("q1", &[1]), ("q2", &[1])], 8.1),
            (&[], 0.0),
        ];
        for (atoms, expected) in cases {
            let idx = state_index(&m, atoms);
            assert!(
                (values[idx] - expected).abs() < 1e-7,
                "state {:?}: got {}, want {}",
                atoms,
                values[idx],
                expected
            );
        }
    }

    #[test]
    fn oracle_satisfies_its_own_bellman_residual() {
        let (mut store, spec) = load("chain_effects");
        let m = build_ground_mdp(&mut store, &spec, 1, 12).unwrap();
        let (values, _) = m.exact_solve(1e-9);
        for s in 0..m.state_count() {
            let best = (0..m.actions.len())
                .map(|a| m.backup(s, a, &values))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((best - values[s]).abs() < 1e-7);
        }
    }

    #[test]
    fn reward_table_matches_reward_diagram_classification() {
        let (mut store, spec) = load("two_step_goal");
        let m = build_ground_mdp(&mut store, &spec, 2, 12).unwrap();
        let report = compare(&store, spec.reward, &m, &m.rewards, 1e-12).unwrap();
        assert_eq!(report.failures, Vec::new());
        assert!(report.max_abs_diff <= 1e-12);
    }
}
