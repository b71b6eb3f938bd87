//! Top-down request evaluation over a policy tree.
//!
//! At each internal node the edge matching the request's value is explored
//! first; only when that subtree yields no allow does evaluation retrace to
//! the node's wildcard edge. Leaves allow when one of their rules matches the
//! full request, operation included.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{rule_matches, Decision, Request, Term};
use crate::tree::{NodeId, NodeKind, PolicyTree};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvalOutcome {
    pub decision: Decision,
    /// Every node entered, in visiting order.
    pub visited_path: Vec<NodeId>,
    /// Deepest node whose root path the request satisfies; set iff denied.
    pub deny_node: Option<NodeId>,
    /// The leaf that granted access, if any.
    pub allow_leaf: Option<NodeId>,
    /// Wildcard edges taken after the exact edge's subtree failed.
    pub retrace_count: u32,
}

struct Walk<'a> {
    tree: &'a PolicyTree,
    request: &'a Request,
    visited: Vec<NodeId>,
    deepest: NodeId,
    retraces: u32,
}

impl Walk<'_> {
    fn visit(&mut self, id: NodeId) -> Option<NodeId> {
        let node = self.tree.node(id);
        self.visited.push(id);
        if node.depth > self.tree.node(self.deepest).depth {
            self.deepest = id;
        }
        match &node.kind {
            NodeKind::Leaf { rules, .. } => {
                let policy = self.tree.policy();
                rules
                    .iter()
                    .any(|&r| rule_matches(&policy.rules()[r], self.request))
                    .then_some(id)
            }
            NodeKind::Internal { attr, edges, wildcard } => {
                let label = Term::of(self.request.value(*attr));
                let exact = edges.iter().find(|(l, _)| *l == label).map(|&(_, c)| c);
                if let Some(child) = exact {
                    if let Some(leaf) = self.visit(child) {
                        return Some(leaf);
                    }
                }
                let wildcard = (*wildcard)?;
                if exact.is_some() {
                    self.retraces += 1;
                }
                self.visit(wildcard)
            }
        }
    }
}

/// Evaluates `request` against `tree`.
pub fn evaluate(tree: &PolicyTree, request: &Request) -> EvalOutcome {
    let mut walk = Walk {
        tree,
        request,
        visited: Vec::with_capacity(tree.attribute_count() + 1),
        deepest: tree.root(),
        retraces: 0,
    };
    let allow_leaf = walk.visit(tree.root());
    let policy = tree.policy();
    let decision = match allow_leaf {
        Some(leaf) => Decision::from_matches(
            policy,
            tree.node(leaf)
                .leaf_rules()
                .iter()
                .map(|&r| &policy.rules()[r])
                .filter(|r| rule_matches(r, request)),
        ),
        None => Decision::deny(),
    };
    EvalOutcome {
        decision,
        deny_node: allow_leaf.is_none().then_some(walk.deepest),
        visited_path: walk.visited,
        allow_leaf,
        retrace_count: walk.retraces,
    }
}

/// Allocation-free decision: true iff some reachable leaf grants the request.
pub fn allows(tree: &PolicyTree, request: &Request) -> bool {
    fn go(tree: &PolicyTree, id: NodeId, request: &Request) -> bool {
        match &tree.node(id).kind {
            NodeKind::Leaf { rules, .. } => rules
                .iter()
                .any(|&r| rule_matches(&tree.policy().rules()[r], request)),
            NodeKind::Internal { attr, edges, wildcard } => {
                let label = Term::of(request.value(*attr));
                if let Some(&(_, child)) = edges.iter().find(|(l, _)| *l == label) {
                    if go(tree, child, request) {
                        return true;
                    }
                }
                wildcard.is_some_and(|w| go(tree, w, request))
            }
        }
    }
    go(tree, tree.root(), request)
}

/// The node a denied request got stuck at, where feedback search starts.
pub fn locate_deny_node(tree: &PolicyTree, request: &Request) -> Result<NodeId> {
    evaluate(tree, request).deny_node.ok_or(Error::RequestNotDenied)
}
