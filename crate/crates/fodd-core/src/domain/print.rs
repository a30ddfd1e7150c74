//! Canonical textual rendering of domains and diagrams.
//!
//! Printing then re-parsing yields a structurally identical domain: diagrams
//! are printed as nested `if` expressions (sharing is unfolded; hash-consing
//! restores it on parse) and frame TVDs stay omitted.

use std::fmt::Write as _;

use crate::domain::DomainSpec;
use crate::store::{Node, NodeId, Store};

/// Renders a diagram as a single-line expression.
pub fn print_expr(store: &Store, d: NodeId) -> String {
    let mut out = String::new();
    write_expr(store, d, &mut out);
    out
}

fn write_expr(store: &Store, d: NodeId, out: &mut String) {
    match store.node(d) {
        Node::Leaf(leaf) => match &leaf.tag {
            None => {
                let _ = write!(out, "{}", leaf.value);
            }
            Some(tag) => {
                let _ = write!(out, "(leaf {} {}(", leaf.value, tag.action);
                for (i, t) in tag.args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    let _ = write!(out, "{t}");
                }
                out.push_str("))");
            }
        },
        Node::Inner { label, hi, lo } => {
            let _ = write!(out, "(if {label} ");
            write_expr(store, *hi, out);
            out.push(' ');
            write_expr(store, *lo, out);
            out.push(')');
        }
    }
}

/// Renders a diagram as an indented expression, two spaces per level.
pub fn print_expr_pretty(store: &Store, d: NodeId) -> String {
    let mut out = String::new();
    write_pretty(store, d, 0, &mut out);
    out.push('\n');
    out
}

fn write_pretty(store: &Store, d: NodeId, indent: usize, out: &mut String) {
    match store.node(d) {
        Node::Leaf(_) => write_expr(store, d, out),
        Node::Inner { label, hi, lo } => {
            let _ = write!(out, "(if {label}");
            for child in [hi, lo] {
                out.push('\n');
                for _ in 0..indent + 1 {
                    out.push_str("  ");
                }
                write_pretty(store, *child, indent + 1, out);
            }
            out.push(')');
        }
    }
}

/// Renders a domain in the on-disk format.
pub fn print_domain(store: &Store, spec: &DomainSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "domain {}", spec.name);
    let preds: Vec<String> = spec
        .predicates
        .iter()
        .map(|p| format!("{}/{}", p.name, p.arity))
        .collect();
    let _ = writeln!(out, "predicates: {}", preds.join(", "));
    if !spec.constants.is_empty() {
        let _ = writeln!(out, "constants: {}", spec.constants.join(", "));
    }
    let _ = writeln!(out, "discount: {}", spec.discount);
    let _ = writeln!(out, "absorbing-goal: {}", spec.absorbing_goal);
    let _ = writeln!(out, "reward: {}", print_expr(store, spec.reward));
    for action in &spec.actions {
        let _ = writeln!(out);
        let _ = writeln!(out, "action {}({}):", action.name, action.params.join(", "));
        for alt in &action.alternatives {
            let _ = writeln!(
                out,
                "  alternative {} prob {}:",
                alt.name,
                print_expr(store, alt.prob)
            );
            for tvd in alt.tvds.values() {
                let _ = writeln!(
                    out,
                    "    tvd {}({}): {}",
                    tvd.predicate,
                    tvd.pred_params.join(", "),
                    print_expr(store, tvd.diagram)
                );
            }
        }
    }
    out
}
