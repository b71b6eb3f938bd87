use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::meta::MetaPolicy;
use crate::model::{AttrId, Policy, Relation, Term};

use super::split::{partition, select_split_attribute};
use super::{NodeId, NodeKind, PolicyTree, SplitHeuristic, TreeNode};

/// Builds a policy tree. Every rule ends up in exactly one leaf: a rule with
/// a concrete value on the split attribute follows that value's edge, a rule
/// that leaves it unconstrained follows the wildcard edge.
pub fn build_tree<R: Rng + ?Sized>(
    policy: &Arc<Policy>,
    heuristic: SplitHeuristic,
    meta: &MetaPolicy,
    rng: &mut R,
) -> Result<PolicyTree> {
    for rule in policy.rules() {
        for p in rule.predicates() {
            if p.relation != Relation::Eq {
                return Err(Error::UnsupportedPredicate {
                    rule_id: rule.id,
                    attribute: policy.schema().name(p.attr).to_owned(),
                    relation: p.relation.symbol().to_owned(),
                });
            }
        }
    }
    let mut builder = Builder {
        policy,
        heuristic,
        meta,
        rng,
        nodes: Vec::new(),
        used: vec![false; policy.schema().len()],
    };
    let all: Vec<usize> = (0..policy.rules().len()).collect();
    let root = builder.node(all, None, None, 0)?;
    let nodes = builder.nodes;
    Ok(PolicyTree::from_parts(Arc::clone(policy), nodes, root, heuristic))
}

struct Builder<'a, R: ?Sized> {
    policy: &'a Policy,
    heuristic: SplitHeuristic,
    meta: &'a MetaPolicy,
    rng: &'a mut R,
    nodes: Vec<TreeNode>,
    used: Vec<bool>,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn push(&mut self, parent: Option<NodeId>, incoming: Option<(AttrId, Term)>, depth: u32, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(TreeNode {
            id,
            parent,
            depth,
            incoming,
            kind,
        });
        id
    }

    fn leaf(&mut self, rules: Vec<usize>, parent: Option<NodeId>, incoming: Option<(AttrId, Term)>, depth: u32) -> NodeId {
        let operations: BTreeSet<_> = rules.iter().map(|&r| self.policy.rules()[r].operation).collect();
        self.push(
            parent,
            incoming,
            depth,
            NodeKind::Leaf {
                rules,
                operations: operations.into_iter().collect(),
            },
        )
    }

    fn node(&mut self, rules: Vec<usize>, parent: Option<NodeId>, incoming: Option<(AttrId, Term)>, depth: u32) -> Result<NodeId> {
        // Unused attributes that still constrain some rule here.
        let candidates: Vec<AttrId> = self
            .policy
            .schema()
            .ids()
            .filter(|a| !self.used[a.index()])
            .filter(|&a| rules.iter().any(|&r| self.policy.rules()[r].term(a).is_concrete()))
            .collect();
        if candidates.is_empty() {
            return Ok(self.leaf(rules, parent, incoming, depth));
        }

        let attr = select_split_attribute(self.policy, &rules, &candidates, self.heuristic, self.meta, self.rng)?;
        let mut parts: Vec<(Term, Vec<usize>)> = partition(self.policy, &rules, attr).into_iter().collect();
        let schema = self.policy.schema();
        parts.sort_by(|(a, _), (b, _)| {
            (*a == Term::Any)
                .cmp(&(*b == Term::Any))
                .then_with(|| schema.term_name(attr, *a).cmp(schema.term_name(attr, *b)))
        });

        let id = self.push(
            parent,
            incoming,
            depth,
            NodeKind::Internal {
                attr,
                edges: Vec::new(),
                wildcard: None,
            },
        );
        self.used[attr.index()] = true;
        let mut edges = Vec::with_capacity(parts.len());
        let mut wildcard = None;
        for (label, part) in parts {
            let child = self.node(part, Some(id), Some((attr, label)), depth + 1)?;
            if label == Term::Any {
                wildcard = Some(child);
            } else {
                edges.push((label, child));
            }
        }
        self.used[attr.index()] = false;
        self.nodes[id.index()].kind = NodeKind::Internal { attr, edges, wildcard };
        Ok(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::parse_policy;
    use crate::samples;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(policy: Policy, h: SplitHeuristic) -> PolicyTree {
        let meta = samples::example_meta(&policy);
        build_tree(&Arc::new(policy), h, &meta, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    fn label(tree: &PolicyTree, id: NodeId) -> String {
        let s = tree.policy().schema();
        match &tree.node(id).kind {
            NodeKind::Internal { attr, .. } => s.name(*attr).to_owned(),
            NodeKind::Leaf { rules, .. } => format!(
                "leaf{:?}",
                rules.iter().map(|&r| tree.policy().rules()[r].id).collect::<Vec<_>>()
            ),
        }
    }

    #[test]
    fn high_cost_first_worked_example_shape() {
        let tree = build(samples::worked_example_policy(), SplitHeuristic::HighCostFirst);
        let s = tree.policy().schema();
        let root = tree.node(tree.root());
        assert_eq!(label(&tree, tree.root()), "role");
        let edges: Vec<_> = root
            .children()
            .map(|(l, c)| (s.term_name(s.attr("role").unwrap(), l).to_owned(), label(&tree, c)))
            .collect();
        assert_eq!(
            edges,
            [
                ("admin".to_owned(), "leaf[1]".to_owned()),
                ("intern".to_owned(), "clearance".to_owned()),
                ("manager".to_owned(), "clearance".to_owned()),
            ]
        );
        // role -> manager -> clearance -> low -> department -> HR -> leaf r3
        assert_eq!(tree.height(), 3);
        assert_eq!(tree.node_count(), 7);
        assert_eq!(tree.max_branching_factor(), 3);
        assert!(validate_ok(&tree));
    }

    fn validate_ok(tree: &PolicyTree) -> bool {
        super::super::validate_tree(tree, tree.policy()).is_valid()
    }

    #[test]
    fn empty_policy_gives_single_empty_leaf() {
        let policy = parse_policy(
            r#"{"schema":[{"name":"a","category":"user","domain":["x"]}],"operations":["op"],"rules":[]}"#,
        )
        .unwrap();
        let tree = build(policy, SplitHeuristic::HighestEntropy);
        assert_eq!(tree.node_count(), 1);
        assert!(tree.node(tree.root()).is_leaf());
        assert!(tree.node(tree.root()).leaf_rules().is_empty());
    }

    #[test]
    fn relational_predicates_are_rejected() {
        let policy = parse_policy(
            r#"{"schema":[{"name":"a","category":"user","ordered":true,"domain":["x","y"]}],
                "operations":["op"],"rules":[{"id":4,"predicates":{"a":{"rel":"<=","value":"x"}},"op":"op"}]}"#,
        )
        .unwrap();
        let meta = MetaPolicy::uniform(policy.schema(), 1.0);
        let err = build_tree(&Arc::new(policy), SplitHeuristic::Random, &meta, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap_err();
        assert!(matches!(err, Error::UnsupportedPredicate { rule_id: 4, .. }));
        assert!(err.to_string().contains("unsupported predicate in tree construction"));
    }

    #[test]
    fn wildcard_rules_take_the_wildcard_edge() {
        let tree = build(samples::visibility_example_policy(), SplitHeuristic::HighCostFirst);
        let s = tree.policy().schema();
        let root = tree.node(tree.root());
        assert_eq!(root.tested_attribute(), s.attr("sensitivity"));
        let NodeKind::Internal { edges, wildcard, .. } = &root.kind else { panic!() };
        assert_eq!(edges.len(), 1);
        let w = wildcard.expect("r1 and r2 ignore sensitivity");
        assert_eq!(label(&tree, w), "role");
        assert!(validate_ok(&tree));
    }

    #[test]
    fn low_cost_first_roots_at_cheapest_constrained_attribute() {
        let tree = build(samples::visibility_example_policy(), SplitHeuristic::LowCostFirst);
        assert_eq!(label(&tree, tree.root()), "training_over");
    }
}
