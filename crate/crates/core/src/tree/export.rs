//! JSON dump of a policy tree, and loading it back against its policy.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Policy, Term, WILDCARD};

use super::{validate_tree, NodeId, NodeKind, PolicyTree, SplitHeuristic, TreeNode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: u32,
    /// `internal` or `leaf`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub edges: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wildcard: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_ids: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ops: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeDoc {
    pub nodes: Vec<NodeDoc>,
    pub root: u32,
    pub heuristic: SplitHeuristic,
    pub node_count: usize,
}

impl PolicyTree {
    pub fn to_doc(&self) -> TreeDoc {
        let policy = self.policy();
        let schema = policy.schema();
        let nodes = self
            .nodes()
            .iter()
            .map(|n| match &n.kind {
                NodeKind::Internal { attr, edges, wildcard } => NodeDoc {
                    id: n.id.0,
                    kind: "internal".into(),
                    attribute: Some(schema.name(*attr).to_owned()),
                    edges: edges
                        .iter()
                        .map(|&(l, c)| (schema.term_name(*attr, l).to_owned(), c.0))
                        .collect(),
                    wildcard: wildcard.map(|w| w.0),
                    rule_ids: None,
                    ops: None,
                },
                NodeKind::Leaf { rules, operations } => NodeDoc {
                    id: n.id.0,
                    kind: "leaf".into(),
                    attribute: None,
                    edges: BTreeMap::new(),
                    wildcard: None,
                    rule_ids: Some(rules.iter().map(|&r| policy.rules()[r].id).collect()),
                    ops: Some(
                        operations
                            .iter()
                            .map(|op| op.map_or(WILDCARD, |o| policy.op_name(o)).to_owned())
                            .collect(),
                    ),
                },
            })
            .collect();
        TreeDoc {
            nodes,
            root: self.root().0,
            heuristic: self.heuristic(),
            node_count: self.node_count(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("tree documents serialize")
    }

    /// Rebuilds a tree dumped by [`PolicyTree::to_doc`]; the result must pass
    /// [`validate_tree`] against `policy`.
    pub fn from_doc(policy: &Arc<Policy>, doc: &TreeDoc) -> Result<Self> {
        let schema = policy.schema();
        let n = doc.nodes.len();
        if doc.node_count != n {
            return Err(Error::invalid("tree.node_count", format!("{} declared, {n} present", doc.node_count)));
        }
        let rule_index: HashMap<u64, usize> = policy.rules().iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        let check_id = |id: u32, location: &str| -> Result<NodeId> {
            if (id as usize) < n {
                Ok(NodeId(id))
            } else {
                Err(Error::invalid(location, format!("node id {id} out of range")))
            }
        };

        let mut nodes: Vec<TreeNode> = Vec::with_capacity(n);
        for (i, d) in doc.nodes.iter().enumerate() {
            let location = format!("tree.nodes[{i}]");
            if d.id as usize != i {
                return Err(Error::invalid(location, "node ids must equal their position"));
            }
            let kind = match d.kind.as_str() {
                "internal" => {
                    let name = d
                        .attribute
                        .as_deref()
                        .ok_or_else(|| Error::invalid(&location, "internal node without attribute"))?;
                    let attr = schema.attr(name).ok_or_else(|| Error::UnknownAttribute {
                        location: location.clone(),
                        attribute: name.to_owned(),
                    })?;
                    let mut edges = Vec::with_capacity(d.edges.len());
                    for (token, &child) in &d.edges {
                        let label = match schema.term(attr, token) {
                            Some(Term::Any) | None => {
                                return Err(Error::ValueOutsideDomain {
                                    location: format!("{location}.edges"),
                                    attribute: name.to_owned(),
                                    value: token.clone(),
                                })
                            }
                            Some(t) => t,
                        };
                        edges.push((label, check_id(child, &location)?));
                    }
                    let wildcard = d.wildcard.map(|w| check_id(w, &location)).transpose()?;
                    NodeKind::Internal { attr, edges, wildcard }
                }
                "leaf" => {
                    let mut rules = Vec::new();
                    for id in d.rule_ids.iter().flatten() {
                        rules.push(*rule_index.get(id).ok_or_else(|| {
                            Error::invalid(&location, format!("unknown rule id {id}"))
                        })?);
                    }
                    let mut operations: Vec<_> = rules.iter().map(|&r| policy.rules()[r].operation).collect();
                    operations.sort();
                    operations.dedup();
                    NodeKind::Leaf { rules, operations }
                }
                other => return Err(Error::invalid(location, format!("unknown node kind `{other}`"))),
            };
            nodes.push(TreeNode {
                id: NodeId(i as u32),
                parent: None,
                depth: 0,
                incoming: None,
                kind,
            });
        }

        let root = check_id(doc.root, "tree.root")?;
        let mut stack = vec![root];
        let mut visited = vec![false; n];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut visited[id.index()], true) {
                return Err(Error::invalid("tree", format!("node {} has more than one parent", id.0)));
            }
            let children: Vec<_> = nodes[id.index()].children().collect();
            let attr = nodes[id.index()].tested_attribute();
            let depth = nodes[id.index()].depth;
            for (label, child) in children {
                let c = &mut nodes[child.index()];
                c.parent = Some(id);
                c.depth = depth + 1;
                c.incoming = attr.map(|a| (a, label));
                stack.push(child);
            }
        }

        let tree = PolicyTree::from_parts(Arc::clone(policy), nodes, root, doc.heuristic);
        let report = validate_tree(&tree, policy);
        if let Some(v) = report.violations.first() {
            return Err(Error::invalid("tree", v.to_string()));
        }
        Ok(tree)
    }

    pub fn parse(policy: &Arc<Policy>, text: &str) -> Result<Self> {
        let doc: TreeDoc = serde_json::from_str(text)?;
        PolicyTree::from_doc(policy, &doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;
    use crate::tree::build_tree;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dump_and_reload() {
        let policy = Arc::new(samples::visibility_example_policy());
        let meta = samples::example_meta(&policy);
        let tree = build_tree(&policy, SplitHeuristic::HighCostFirst, &meta, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let json = tree.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["heuristic"], "high_cost_first");
        assert_eq!(value["node_count"], tree.node_count());
        assert_eq!(value["nodes"][0]["attribute"], "sensitivity");

        let again = PolicyTree::parse(&policy, &json).unwrap();
        assert_eq!(again.nodes(), tree.nodes());
        assert_eq!(again.root(), tree.root());
    }

    #[test]
    fn reload_rejects_inconsistent_leaf() {
        let policy = Arc::new(samples::worked_example_policy());
        let meta = samples::example_meta(&policy);
        let tree = build_tree(&policy, SplitHeuristic::HighCostFirst, &meta, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut doc = tree.to_doc();
        for node in &mut doc.nodes {
            if let Some(ids) = &mut node.rule_ids {
                if ids == &[2] {
                    ids.push(1);
                }
            }
        }
        assert!(PolicyTree::from_doc(&policy, &doc).is_err());
    }
}
