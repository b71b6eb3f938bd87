mod common;

use abac_explain::tree::NodeKind;
use abac_explain::{evaluate, locate_deny_node, oracle_allows, rule_matches, NodeId, PolicyTree, Request, SplitHeuristic, Term};
use common::{all_requests, specs};
use proptest::prelude::*;

/// Evaluation that never takes a wildcard edge.
fn exact_only(tree: &PolicyTree, id: NodeId, q: &Request) -> bool {
    match &tree.node(id).kind {
        NodeKind::Leaf { rules, .. } => rules.iter().any(|&r| rule_matches(&tree.policy().rules()[r], q)),
        NodeKind::Internal { attr, edges, .. } => edges
            .iter()
            .find(|(l, _)| *l == Term::of(q.value(*attr)))
            .is_some_and(|&(_, c)| exact_only(tree, c, q)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn tree_decisions_match_the_rule_scan(spec in specs(4, 3, 12, 0), seed in any::<u64>()) {
        let inst = spec.instance();
        for h in SplitHeuristic::ALL {
            let tree = inst.tree(h, seed);
            for q in all_requests(&inst.policy) {
                prop_assert_eq!(evaluate(&tree, &q).decision.is_allow(), oracle_allows(&inst.policy, &q));
            }
        }
    }

    #[test]
    fn traversal_bookkeeping(spec in specs(7, 4, 20, 64), seed in any::<u64>()) {
        let inst = spec.instance();
        let n_attrs = inst.policy.schema().len();
        for h in SplitHeuristic::ALL {
            let tree = inst.tree(h, seed);
            for q in &inst.requests {
                let out = evaluate(&tree, q);
                // Dropping wildcard edges can only lose allows.
                if exact_only(&tree, tree.root(), q) {
                    prop_assert!(out.decision.is_allow());
                }
                let wildcard_entries = out
                    .visited_path
                    .iter()
                    .filter(|&&n| matches!(tree.node(n).incoming, Some((_, Term::Any))))
                    .count() as u32;
                prop_assert!(out.retrace_count <= wildcard_entries);
                prop_assert!(
                    out.visited_path.len() <= 1 + n_attrs + out.retrace_count as usize * n_attrs,
                    "{} nodes visited with {} retraces", out.visited_path.len(), out.retrace_count
                );
                prop_assert_eq!(out.visited_path.first(), Some(&tree.root()));
                match out.deny_node {
                    Some(deny) => {
                        prop_assert!(!out.decision.is_allow());
                        prop_assert!(out.visited_path.contains(&deny));
                        for n in tree.path_to(deny) {
                            if let Some((a, t)) = tree.node(n).incoming {
                                prop_assert!(t == Term::Any || t == Term::of(q.value(a)));
                            }
                        }
                        prop_assert_eq!(locate_deny_node(&tree, q).unwrap(), deny);
                    }
                    None => {
                        prop_assert!(out.decision.is_allow());
                        prop_assert!(out.allow_leaf.is_some());
                        prop_assert!(locate_deny_node(&tree, q).is_err());
                    }
                }
            }
        }
    }
}
