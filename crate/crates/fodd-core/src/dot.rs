//! Graphviz export.
//!
//! Inner nodes are ellipses labeled with the printed label; the solid edge is
//! the true branch and the dashed edge the false branch. Leaves are boxes
//! showing the value and, when present, the action tag. Node numbering is the
//! store insertion order, so exports of the same run diff cleanly.

use std::fmt::Write as _;

use crate::store::{Node, NodeId, Store};

pub fn to_dot(store: &Store, root: NodeId, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{name}\" {{");
    let _ = writeln!(out, "  rankdir=TB;");
    for id in store.reachable(root) {
        match store.node(id) {
            Node::Leaf(leaf) => {
                let text = match &leaf.tag {
                    Some(tag) => format!("{} @ {}", leaf.value, tag),
                    None => leaf.value.to_string(),
                };
                let _ = writeln!(
                    out,
                    "  n{} [shape=box, label=\"{}\"];",
                    id.0,
                    escape(&text)
                );
            }
            Node::Inner { label, hi, lo } => {
                let _ = writeln!(
                    out,
                    "  n{} [shape=ellipse, label=\"{}\"];",
                    id.0,
                    escape(&label.to_string())
                );
                let _ = writeln!(out, "  n{} -> n{} [style=solid];", id.0, hi.0);
                let _ = writeln!(out, "  n{} -> n{} [style=dashed];", id.0, lo.0);
            }
        }
    }
    let _ = writeln!(out, "}}");
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Label;
    use crate::term::Term;
    use crate::value::Value;

    #[test]
    fn export_is_deterministic_and_complete() {
        let mut s = Store::new();
        let one = s.mk_leaf(Value::one());
        let zero = s.zero_leaf();
        let label = Label::atom("p", vec![Term::var("x")]);
        let d = s.mk_node(label, one, zero).unwrap();
        let dot = to_dot(&s, d, "t");
        assert!(dot.contains("shape=box"));
        assert!(dot.contains("p(x)"));
        assert!(dot.contains("style=solid"));
        assert!(dot.contains("style=dashed"));
        assert_eq!(dot, to_dot(&s, d, "t"));
    }
}
