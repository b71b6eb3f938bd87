//! Policy trees: n-ary decision trees over attributes whose leaves hold the
//! rules consistent with their root path.

mod build;
mod export;
mod split;
mod validate;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{AttrId, OpId, Policy, Term};

pub use build::build_tree;
pub use export::{NodeDoc, TreeDoc};
pub use split::{entropy, information_gain, select_split_attribute};
pub use validate::{validate_tree, ValidationReport, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitHeuristic {
    HighestEntropy,
    LowestEntropy,
    HighCostFirst,
    LowCostFirst,
    Random,
}

impl SplitHeuristic {
    pub const ALL: [SplitHeuristic; 5] = [
        SplitHeuristic::HighestEntropy,
        SplitHeuristic::LowestEntropy,
        SplitHeuristic::HighCostFirst,
        SplitHeuristic::LowCostFirst,
        SplitHeuristic::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitHeuristic::HighestEntropy => "highest_entropy",
            SplitHeuristic::LowestEntropy => "lowest_entropy",
            SplitHeuristic::HighCostFirst => "high_cost_first",
            SplitHeuristic::LowCostFirst => "low_cost_first",
            SplitHeuristic::Random => "random",
        }
    }
}

impl fmt::Display for SplitHeuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitHeuristic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.replace('-', "_").as_str() {
            "highest_entropy" | "entropy" => SplitHeuristic::HighestEntropy,
            "lowest_entropy" => SplitHeuristic::LowestEntropy,
            "high_cost_first" | "high_cost" => SplitHeuristic::HighCostFirst,
            "low_cost_first" | "low_cost" => SplitHeuristic::LowCostFirst,
            "random" => SplitHeuristic::Random,
            other => return Err(format!("unknown split heuristic `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Internal {
        attr: AttrId,
        /// Concrete edges (values and `#`), ordered by value token.
        edges: Vec<(Term, NodeId)>,
        wildcard: Option<NodeId>,
    },
    Leaf {
        /// Indices into the policy's rule list.
        rules: Vec<usize>,
        /// Distinct rule operations, `None` standing for `*`.
        operations: Vec<Option<OpId>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: u32,
    /// Attribute tested by the parent and the label of the edge taken.
    pub incoming: Option<(AttrId, Term)>,
    pub kind: NodeKind,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn tested_attribute(&self) -> Option<AttrId> {
        match self.kind {
            NodeKind::Internal { attr, .. } => Some(attr),
            NodeKind::Leaf { .. } => None,
        }
    }

    /// Outgoing edges, concrete first, then the wildcard edge labelled `Term::Any`.
    pub fn children(&self) -> impl DoubleEndedIterator<Item = (Term, NodeId)> + '_ {
        let (edges, wildcard): (&[(Term, NodeId)], Option<NodeId>) = match &self.kind {
            NodeKind::Internal { edges, wildcard, .. } => (edges, *wildcard),
            NodeKind::Leaf { .. } => (&[], None),
        };
        edges
            .iter()
            .copied()
            .chain(wildcard.map(|w| (Term::Any, w)))
    }

    pub fn child_count(&self) -> usize {
        match &self.kind {
            NodeKind::Internal { edges, wildcard, .. } => edges.len() + wildcard.is_some() as usize,
            NodeKind::Leaf { .. } => 0,
        }
    }

    pub fn leaf_rules(&self) -> &[usize] {
        match &self.kind {
            NodeKind::Leaf { rules, .. } => rules,
            NodeKind::Internal { .. } => &[],
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyTree {
    policy: Arc<Policy>,
    nodes: Vec<TreeNode>,
    root: NodeId,
    heuristic: SplitHeuristic,
    max_branching_factor: usize,
    height: u32,
}

impl PolicyTree {
    pub(crate) fn from_parts(policy: Arc<Policy>, nodes: Vec<TreeNode>, root: NodeId, heuristic: SplitHeuristic) -> Self {
        let max_branching_factor = nodes.iter().map(TreeNode::child_count).max().unwrap_or(0);
        let height = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        PolicyTree {
            policy,
            nodes,
            root,
            heuristic,
            max_branching_factor,
            height,
        }
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn shared_policy(&self) -> &Arc<Policy> {
        &self.policy
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn heuristic(&self) -> SplitHeuristic {
        self.heuristic
    }

    #[inline]
    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Largest number of outgoing edges (wildcard included) of any node.
    pub fn max_branching_factor(&self) -> usize {
        self.max_branching_factor
    }

    pub fn attribute_count(&self) -> usize {
        self.policy.schema().len()
    }

    /// Depth of the deepest node, the root having depth 0.
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Node ids from the root down to `id`.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.node(cur).parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// The exact edge of an internal node for `label`, if any.
    #[inline]
    pub fn edge(&self, id: NodeId, label: Term) -> Option<NodeId> {
        match &self.node(id).kind {
            NodeKind::Internal { edges, .. } => edges.iter().find(|(l, _)| *l == label).map(|&(_, c)| c),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }
}
