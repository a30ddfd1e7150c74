//! Iteration drivers: relational value iteration and relational modified
//! policy iteration.
//!
//! Both drivers stop when the leaf bound on the difference between the
//! greedy backup and the current iterate falls to `eps * (1 - g) / (2 g)`.
//! The leaf bound over-approximates the true sup-norm over all relational
//! states, so stopping is conservative. Between steps every iterate is
//! normalized: reduced and renamed to canonical variable names, which makes
//! structurally converged fixed points literal fixed points of the diagram
//! representation.
//!
//! Unlike classic modified policy iteration, the partial-evaluation loop
//! regresses the *latest* policy at every inner step; with restricted
//! existential policies the regression of a fixed policy is not expressible,
//! and refreshing the policy keeps every iterate a well-defined value.

use serde::Serialize;

use crate::domain::{DomainError, DomainSpec};
use crate::policy::PolicyDiagram;
use crate::regression::rel_greedy;
use crate::store::{NodeId, OpKind, Store};
use crate::term::ActionTag;
use crate::value::Value;

/// Inner-step schedule `m_n` plus stopping parameters.
#[derive(Clone, Debug)]
pub struct MpiSchedule {
    pub m: MSchedule,
    pub epsilon: Value,
    pub max_outer: u32,
    /// Safety stop: when an iterate exceeds this many nodes the solver
    /// returns it flagged non-converged instead of growing further. Some
    /// domains need more partitions with every horizon extension, so their
    /// diagrams never stabilize; this surfaces that through the trace.
    pub max_nodes: usize,
}

#[derive(Clone, Debug)]
pub enum MSchedule {
    Constant(u32),
    /// Explicit per-outer-iteration counts; the last entry repeats.
    List(Vec<u32>),
}

impl MSchedule {
    /// Number of inner steps for outer iteration `n` (1-based).
    pub fn steps(&self, n: u32) -> u32 {
        match self {
            MSchedule::Constant(m) => *m,
            MSchedule::List(l) => {
                if l.is_empty() {
                    0
                } else {
                    *l.get(n as usize - 1).unwrap_or_else(|| l.last().unwrap())
                }
            }
        }
    }
}

impl Default for MpiSchedule {
    fn default() -> Self {
        MpiSchedule {
            m: MSchedule::Constant(1),
            epsilon: Value::ratio(1, 100),
            max_outer: 100,
            max_nodes: 2_500,
        }
    }
}

impl MpiSchedule {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.epsilon <= Value::zero() {
            return Err(DomainError::Parse {
                line: 0,
                col: 0,
                message: "epsilon must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Initial,
    Greedy,
    RegressPolicy,
}

/// One machine-readable record per iterate.
#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub generation: u32,
    pub kind: StepKind,
    pub nodes: usize,
    pub max_leaf: String,
    pub max_leaf_ratio: String,
    /// Leaf bound against the previous outer iterate; present at greedy steps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_bound: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_bound_ratio: Option<String>,
}

/// A retained iterate: the diagram is simultaneously the value function and
/// (through its tags) the policy of generation `k`.
#[derive(Clone, Copy, Debug)]
pub struct Iterate {
    pub kind: StepKind,
    pub policy: PolicyDiagram,
}

impl Iterate {
    pub fn diagram(&self) -> NodeId {
        self.policy.root
    }

    pub fn generation(&self) -> u32 {
        self.policy.generation
    }
}

#[derive(Clone, Debug)]
pub struct SolveTrace {
    pub steps: Vec<StepRecord>,
    pub iterates: Vec<Iterate>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    /// The returned value function (the iterate the stopping rule accepted).
    pub value: NodeId,
    /// The greedy policy computed alongside it.
    pub policy: PolicyDiagram,
    pub trace: SolveTrace,
}

/// Upper bound on `sup_s |map_max(a, s) - map_max(b, s)|`: the largest
/// absolute leaf of the difference diagram. Tags are stripped and the
/// operands reduced first; the difference itself is left unreduced so the
/// leaf bound stays valid.
pub fn norm_bound(store: &mut Store, a: NodeId, b: NodeId) -> Value {
    let a = store.strip_tags(a);
    let a = store.reduce(a);
    let b = store.strip_tags(b);
    let b = store.reduce(b);
    let diff = store.apply(OpKind::Sub, a, b);
    store.max_abs_leaf(diff)
}

/// Reduce plus canonical variable renaming, iterated to a fixed point.
pub fn normalize(store: &mut Store, d: NodeId) -> NodeId {
    let mut current = d;
    for _ in 0..4 {
        let reduced = store.reduce(current);
        let renamed = store.canonical_rename(reduced);
        if renamed == current {
            break;
        }
        current = renamed;
    }
    current
}

/// Normalization for iterates: reductions may rebuild the default zero leaf
/// without a tag, so the no-change annotation is restored afterwards.
fn normalize_iterate(store: &mut Store, d: NodeId, noop_tag: &ActionTag) -> NodeId {
    let n = normalize(store, d);
    store.retag_untagged_leaves(n, noop_tag)
}

/// `bound <= eps (1 - g) / (2 g)`, compared exactly in rationals.
fn below_threshold(bound: &Value, epsilon: &Value, gamma: &Value) -> bool {
    let two = Value::from_int(2);
    let lhs = bound.clone() * two * gamma.clone();
    let rhs = epsilon.clone() * (Value::one() - gamma.clone());
    lhs <= rhs
}

fn record_step(
    store: &Store,
    steps: &mut Vec<StepRecord>,
    kind: StepKind,
    generation: u32,
    d: NodeId,
    bound: Option<&Value>,
) {
    let max_leaf = store.max_leaf(d);
    steps.push(StepRecord {
        generation,
        kind,
        nodes: store.size(d),
        max_leaf: max_leaf.to_decimal_string(),
        max_leaf_ratio: max_leaf.to_ratio_string(),
        norm_bound: bound.map(Value::to_decimal_string),
        norm_bound_ratio: bound.map(Value::to_ratio_string),
    });
}

/// The initial iterate: the reward as value function, every leaf annotated
/// with the no-change action.
fn initial_iterate(
    store: &mut Store,
    spec: &DomainSpec,
    noop_tag: &ActionTag,
) -> Result<PolicyDiagram, DomainError> {
    let reduced = store.reduce(spec.reward);
    let tagged = store.retag_leaves(reduced, noop_tag);
    let root = normalize_iterate(store, tagged, noop_tag);
    Ok(PolicyDiagram {
        root,
        generation: 0,
    })
}

fn monotonicity_warnings(
    store: &mut Store,
    spec: &DomainSpec,
    first_greedy: NodeId,
    v0: NodeId,
) -> Vec<String> {
    let mut warnings = Vec::new();
    if store.min_leaf(spec.reward).is_negative() {
        warnings.push(
            "reward has negative leaves; monotone convergence is not guaranteed by R >= 0"
                .to_string(),
        );
        let a = store.strip_tags(first_greedy);
        let b = store.strip_tags(v0);
        let diff = store.apply(OpKind::Sub, a, b);
        if store.min_leaf(diff).is_negative() {
            warnings.push(
                "could not verify greedy(V0) >= V0 by the leaf bound; monotonicity unverified"
                    .to_string(),
            );
        } else {
            warnings.push("verified greedy(V0) >= V0; iterates are monotone from V0".to_string());
        }
    }
    warnings
}

/// Relational modified policy iteration.
///
/// Starting from the reward, each outer iteration computes the greedy backup
/// and policy, stops if the leaf bound says the value has converged, and
/// otherwise performs `m_n` policy-regression steps (refreshing the policy
/// each time) to produce the next iterate.
pub fn rmpi(
    store: &mut Store,
    spec: &DomainSpec,
    sched: &MpiSchedule,
) -> Result<SolveResult, DomainError> {
    sched.validate()?;
    let mut steps = Vec::new();
    let mut iterates = Vec::new();
    let mut warnings = Vec::new();

    let noop = spec.noop_action(store).ok_or(DomainError::MissingNoop)?;
    let noop_tag = ActionTag::new(noop.name.clone(), Vec::new());
    let v0 = initial_iterate(store, spec, &noop_tag)?;
    record_step(store, &mut steps, StepKind::Initial, 0, v0.root, None);
    iterates.push(Iterate {
        kind: StepKind::Initial,
        policy: v0,
    });

    let mut current = v0;
    let mut generation = 0u32;
    for n in 1..=sched.max_outer {
        let (w_raw, _) = rel_greedy(store, current.root, spec, generation + 1)?;
        let w = normalize_iterate(store, w_raw, &noop_tag);
        generation += 1;
        let greedy = PolicyDiagram {
            root: w,
            generation,
        };
        let bound = norm_bound(store, w, current.root);
        record_step(store, &mut steps, StepKind::Greedy, generation, w, Some(&bound));
        iterates.push(Iterate {
            kind: StepKind::Greedy,
            policy: greedy,
        });
        if n == 1 {
            warnings.extend(monotonicity_warnings(store, spec, w, current.root));
        }
        if below_threshold(&bound, &sched.epsilon, &spec.discount) {
            return Ok(SolveResult {
                value: current.root,
                policy: greedy,
                trace: SolveTrace {
                    steps,
                    iterates,
                    converged: true,
                    warnings,
                },
            });
        }
        if store.size(w) > sched.max_nodes {
            warnings.push(format!(
                "greedy backup of generation {generation} has {} nodes (budget {}); \
                 the value function appears to need ever more partitions, stopping here",
                store.size(w),
                sched.max_nodes
            ));
            return Ok(SolveResult {
                value: current.root,
                policy: greedy,
                trace: SolveTrace {
                    steps,
                    iterates,
                    converged: false,
                    warnings,
                },
            });
        }
        let mut inner = greedy;
        for _ in 0..sched.m.steps(n) {
            let (w_next, p_next) =
                crate::policy::rel_regress_policy(store, inner.root, &inner, spec)?;
            let normalized = normalize_iterate(store, w_next, &noop_tag);
            generation += 1;
            inner = PolicyDiagram {
                root: normalized,
                generation,
            };
            let _ = p_next;
            record_step(
                store,
                &mut steps,
                StepKind::RegressPolicy,
                generation,
                normalized,
                None,
            );
            iterates.push(Iterate {
                kind: StepKind::RegressPolicy,
                policy: inner,
            });
        }
        current = inner;
        if store.size(current.root) > sched.max_nodes {
            warnings.push(format!(
                "iterate of generation {} has {} nodes (budget {}); the value \
                 function appears to need ever more partitions, stopping here",
                generation,
                store.size(current.root),
                sched.max_nodes
            ));
            break;
        }
    }
    let policy = PolicyDiagram {
        root: current.root,
        generation,
    };
    Ok(SolveResult {
        value: current.root,
        policy,
        trace: SolveTrace {
            steps,
            iterates,
            converged: false,
            warnings,
        },
    })
}

/// Relational value iteration: repeated greedy backups with the same
/// stopping rule as [`rmpi`].
pub fn value_iteration(
    store: &mut Store,
    spec: &DomainSpec,
    epsilon: &Value,
    cap: u32,
) -> Result<SolveResult, DomainError> {
    let sched = MpiSchedule {
        m: MSchedule::Constant(0),
        epsilon: epsilon.clone(),
        max_outer: cap,
        ..MpiSchedule::default()
    };
    rmpi(store, spec, &sched)
}
