use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;

use crate::model::{AttrId, Policy, Term};

use super::{NodeId, NodeKind, PolicyTree};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    RepeatedAttribute { node: NodeId, attribute: String },
    InconsistentLeafRule { leaf: NodeId, rule_id: u64 },
    MissingRule { rule_id: u64 },
    EmptyInternalNode { node: NodeId },
    Unreachable { node: NodeId },
    BrokenLink { node: NodeId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RepeatedAttribute { node, attribute } => {
                write!(f, "{node}: `{attribute}` is tested twice on the root path")
            }
            Violation::InconsistentLeafRule { leaf, rule_id } => {
                write!(f, "{leaf}: rule {rule_id} contradicts a predicate on the leaf's path")
            }
            Violation::MissingRule { rule_id } => write!(f, "rule {rule_id} is in no leaf"),
            Violation::EmptyInternalNode { node } => write!(f, "{node}: internal node without edges"),
            Violation::Unreachable { node } => write!(f, "{node}: not reachable from the root"),
            Violation::BrokenLink { node } => write!(f, "{node}: parent/child links disagree"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the structural criteria of a policy tree against `policy`.
pub fn validate_tree(tree: &PolicyTree, policy: &Policy) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = vec![false; tree.node_count()];
    let mut placed = HashSet::new();
    // (node, attributes tested above it, edges above it)
    let mut stack: Vec<(NodeId, Vec<(AttrId, Term)>)> = vec![(tree.root(), Vec::new())];
    if tree.node(tree.root()).parent.is_some() {
        report.violations.push(Violation::BrokenLink { node: tree.root() });
    }
    while let Some((id, path)) = stack.pop() {
        if std::mem::replace(&mut seen[id.index()], true) {
            report.violations.push(Violation::BrokenLink { node: id });
            continue;
        }
        let node = tree.node(id);
        match &node.kind {
            NodeKind::Internal { attr, .. } => {
                if path.iter().any(|(a, _)| a == attr) {
                    report.violations.push(Violation::RepeatedAttribute {
                        node: id,
                        attribute: policy.schema().name(*attr).to_owned(),
                    });
                }
                if node.child_count() == 0 {
                    report.violations.push(Violation::EmptyInternalNode { node: id });
                }
                for (label, child) in node.children() {
                    let c = tree.node(child);
                    if c.parent != Some(id) || c.incoming != Some((*attr, label)) || c.depth != node.depth + 1 {
                        report.violations.push(Violation::BrokenLink { node: child });
                    }
                    let mut next = path.clone();
                    next.push((*attr, label));
                    stack.push((child, next));
                }
            }
            NodeKind::Leaf { rules, .. } => {
                for &r in rules {
                    let rule = &policy.rules()[r];
                    placed.insert(r);
                    let consistent = path.iter().all(|&(attr, label)| match label {
                        Term::Any => !rule.term(attr).is_concrete(),
                        concrete => rule.term(attr) == concrete,
                    });
                    if !consistent {
                        report.violations.push(Violation::InconsistentLeafRule {
                            leaf: id,
                            rule_id: rule.id,
                        });
                    }
                }
            }
        }
    }
    for (i, s) in seen.iter().enumerate() {
        if !s {
            report.violations.push(Violation::Unreachable { node: NodeId(i as u32) });
        }
    }
    let missing: BTreeSet<u64> = policy
        .rules()
        .iter()
        .enumerate()
        .filter(|(i, _)| !placed.contains(i))
        .map(|(_, r)| r.id)
        .collect();
    report
        .violations
        .extend(missing.into_iter().map(|rule_id| Violation::MissingRule { rule_id }));
    report
}
