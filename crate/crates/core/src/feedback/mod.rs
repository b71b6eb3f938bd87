//! Bounded feedback search from the deny node of a rejected request.
//!
//! The tree is treated as an undirected graph. Moving to a parent relaxes a
//! constraint and is free; moving to a child adds one, and costs the
//! attribute's change cost when the request does not already carry the
//! edge's value. Depth-ordered strategies use a stack, cost-ordered ones a
//! min-priority queue keyed by (cost, depth, node id). Nodes are marked
//! visited when popped and never expanded twice.

mod oracle;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::meta::{MetaPolicy, VisibilityView};
use crate::model::{rule_matches, AttrId, Policy, Request, Schema, Term, ValueId};
use crate::tree::{NodeId, PolicyTree};

pub use oracle::{oracle_min_feedback, ENUMERATION_GUARD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchLimits {
    pub max_depth: u32,
    pub max_changes: u32,
}

impl SearchLimits {
    pub const fn new(max_depth: u32, max_changes: u32) -> Self {
        SearchLimits { max_depth, max_changes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    DepthFirst,
    DepthBest,
    ChangeFirst,
    ChangeBest,
}

impl SearchStrategy {
    pub const ALL: [SearchStrategy; 4] = [
        SearchStrategy::DepthFirst,
        SearchStrategy::DepthBest,
        SearchStrategy::ChangeFirst,
        SearchStrategy::ChangeBest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SearchStrategy::DepthFirst => "depth_first",
            SearchStrategy::DepthBest => "depth_best",
            SearchStrategy::ChangeFirst => "change_first",
            SearchStrategy::ChangeBest => "change_best",
        }
    }

    fn cost_ordered(self) -> bool {
        matches!(self, SearchStrategy::ChangeFirst | SearchStrategy::ChangeBest)
    }

    fn greedy(self) -> bool {
        matches!(self, SearchStrategy::DepthFirst | SearchStrategy::ChangeFirst)
    }
}

impl fmt::Display for SearchStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SearchStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.replace('-', "_").as_str() {
            "depth_first" => SearchStrategy::DepthFirst,
            "depth_best" => SearchStrategy::DepthBest,
            "change_first" => SearchStrategy::ChangeFirst,
            "change_best" => SearchStrategy::ChangeBest,
            other => return Err(format!("unknown search strategy `{other}`")),
        })
    }
}

/// One suggested modification: set `attr` to `to` (`Term::Undefined` means unset it).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Change {
    pub attr: AttrId,
    pub from: Option<ValueId>,
    pub to: Term,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChangeSet {
    /// Sorted by attribute, one entry per attribute.
    changes: Vec<Change>,
    total_cost: f64,
}

impl ChangeSet {
    pub fn new(mut changes: Vec<Change>) -> Self {
        changes.sort_by_key(|c| c.attr);
        changes.dedup_by_key(|c| c.attr);
        let total_cost = changes.iter().map(|c| c.cost).sum();
        ChangeSet { changes, total_cost }
    }

    pub fn changes(&self) -> &[Change] {
        &self.changes
    }

    pub fn total_cost(&self) -> f64 {
        self.total_cost
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn get(&self, attr: AttrId) -> Option<&Change> {
        self.changes.iter().find(|c| c.attr == attr)
    }

    /// `(attribute, new value)` names, in attribute order.
    pub fn named(&self, schema: &Schema) -> Vec<(String, String)> {
        self.changes
            .iter()
            .map(|c| (schema.name(c.attr).to_owned(), schema.term_name(c.attr, c.to).to_owned()))
            .collect()
    }
}

/// Overwrites every changed attribute of `request`.
pub fn apply_changes(schema: &Schema, request: &Request, change_set: &ChangeSet) -> Result<Request> {
    let mut out = request.clone();
    for c in change_set.changes() {
        if c.attr.index() >= schema.len() {
            return Err(Error::invalid("change_set", "attribute id out of range"));
        }
        let value = match c.to {
            Term::Value(v) if (v.0 as usize) < schema.get(c.attr).domain.len() => Some(v),
            Term::Undefined => None,
            _ => {
                return Err(Error::ValueOutsideDomain {
                    location: "change_set".into(),
                    attribute: schema.name(c.attr).to_owned(),
                    value: format!("{:?}", c.to),
                })
            }
        };
        out.set(c.attr, value);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackResult {
    pub found: bool,
    pub change_set: Option<ChangeSet>,
    /// Nodes popped and marked visited.
    pub nodes_expanded: usize,
    /// Moves between the deny node and the chosen allow leaf.
    pub solution_depth: Option<u32>,
    /// Deny node first, chosen allow leaf last; empty when nothing was found.
    pub path: Vec<NodeId>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    node: NodeId,
    cost: f64,
    depth: u32,
    changes: u32,
    prev: Option<u32>,
    change: Option<Change>,
}

#[derive(Debug, Clone, Copy)]
struct Ranked {
    cost: f64,
    depth: u32,
    node: NodeId,
    seq: u32,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    // Reversed: BinaryHeap is a max-heap and the cheapest entry must pop first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.depth.cmp(&self.depth))
            .then_with(|| other.node.cmp(&self.node))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum Frontier {
    Stack(Vec<u32>),
    Queue(BinaryHeap<Ranked>),
}

impl Frontier {
    fn push(&mut self, seq: u32, e: &Entry) {
        match self {
            Frontier::Stack(s) => s.push(seq),
            Frontier::Queue(q) => q.push(Ranked {
                cost: e.cost,
                depth: e.depth,
                node: e.node,
                seq,
            }),
        }
    }

    fn pop(&mut self) -> Option<u32> {
        match self {
            Frontier::Stack(s) => s.pop(),
            Frontier::Queue(q) => q.pop().map(|r| r.seq),
        }
    }
}

/// Searches for the cheapest way to turn a denied request into an allowed one.
///
/// Fails with [`Error::RequestNotDenied`] when `request` is already allowed.
pub fn feedback_search(
    tree: &PolicyTree,
    meta: &MetaPolicy,
    request: &Request,
    actor: &str,
    strategy: SearchStrategy,
    limits: SearchLimits,
) -> Result<FeedbackResult> {
    let policy = tree.policy();
    request.check(policy.schema(), policy.operations().len())?;
    let deny_node = evaluate(tree, request).deny_node.ok_or(Error::RequestNotDenied)?;
    let view = meta.view(actor);
    Ok(search_from(tree, meta, &view, request, deny_node, strategy, limits, None))
}

/// The search itself, starting at a known deny node. When `trace` is given
/// it receives every expanded node in expansion order.
#[allow(clippy::too_many_arguments)]
pub fn search_from(
    tree: &PolicyTree,
    meta: &MetaPolicy,
    visibility: &VisibilityView,
    request: &Request,
    deny_node: NodeId,
    strategy: SearchStrategy,
    limits: SearchLimits,
    mut trace: Option<&mut Vec<NodeId>>,
) -> FeedbackResult {
    let started = Instant::now();
    let policy = tree.policy();
    let mut entries: Vec<Entry> = Vec::new();
    let mut visited = vec![false; tree.node_count()];
    let mut frontier = if strategy.cost_ordered() {
        Frontier::Queue(BinaryHeap::new())
    } else {
        Frontier::Stack(Vec::new())
    };
    let start = Entry {
        node: deny_node,
        cost: 0.0,
        depth: 0,
        changes: 0,
        prev: None,
        change: None,
    };
    entries.push(start);
    frontier.push(0, &start);

    let mut best: Option<u32> = None;
    let mut expanded = 0usize;
    let mut children = Vec::new();

    while let Some(seq) = frontier.pop() {
        let e = entries[seq as usize];
        if std::mem::replace(&mut visited[e.node.index()], true) {
            continue;
        }
        expanded += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(e.node);
        }
        let node = tree.node(e.node);
        if node.is_leaf() && grants(policy, tree, e.node, request, &entries, seq) {
            if strategy.greedy() {
                best = Some(seq);
                break;
            }
            if best.is_none_or(|b| e.cost < entries[b as usize].cost) {
                best = Some(seq);
            }
        }

        if e.depth == limits.max_depth {
            continue;
        }

        if let Some(parent) = node.parent {
            let up = Entry {
                node: parent,
                depth: e.depth + 1,
                prev: Some(seq),
                change: None,
                ..e
            };
            entries.push(up);
            frontier.push((entries.len() - 1) as u32, &up);
        }

        if let Some(attr) = node.tested_attribute() {
            let current = request.value(attr);
            children.clear();
            for (label, child) in node.children() {
                let changes = label != Term::Any && label != Term::of(current);
                // A hidden value only blocks suggesting it; a hidden attribute blocks every edge.
                if !(visibility.edge_visible(attr, label) || (!changes && visibility.attribute_visible(attr))) {
                    continue;
                }
                let mut next = Entry {
                    node: child,
                    depth: e.depth + 1,
                    prev: Some(seq),
                    change: None,
                    ..e
                };
                if changes {
                    let cost = meta.change_cost(attr, Term::of(current), label);
                    next.cost += cost;
                    next.changes += 1;
                    next.change = Some(Change {
                        attr,
                        from: current,
                        to: label,
                        cost,
                    });
                    if next.changes > limits.max_changes {
                        continue;
                    }
                }
                children.push(next);
            }
            // On a stack the first child in edge order must come out first.
            if !strategy.cost_ordered() {
                children.reverse();
            }
            for next in children.drain(..) {
                entries.push(next);
                frontier.push((entries.len() - 1) as u32, &next);
            }
        }
    }

    let elapsed = started.elapsed();
    match best {
        None => FeedbackResult {
            found: false,
            change_set: None,
            nodes_expanded: expanded,
            solution_depth: None,
            path: Vec::new(),
            elapsed,
        },
        Some(seq) => {
            let (path, changes) = unwind(&entries, seq);
            FeedbackResult {
                found: true,
                change_set: Some(ChangeSet::new(changes)),
                nodes_expanded: expanded,
                solution_depth: Some(entries[seq as usize].depth),
                path,
                elapsed,
            }
        }
    }
}

fn unwind(entries: &[Entry], mut seq: u32) -> (Vec<NodeId>, Vec<Change>) {
    let mut path = Vec::new();
    let mut changes = Vec::new();
    loop {
        let e = &entries[seq as usize];
        path.push(e.node);
        changes.extend(e.change);
        match e.prev {
            Some(p) => seq = p,
            None => break,
        }
    }
    path.reverse();
    (path, changes)
}

/// Whether the leaf holds a rule matched by the request with the entry's changes applied.
fn grants(policy: &Policy, tree: &PolicyTree, leaf: NodeId, request: &Request, entries: &[Entry], seq: u32) -> bool {
    let rules = tree.node(leaf).leaf_rules();
    if rules.is_empty() {
        return false;
    }
    let mut modified = request.clone();
    let mut cur = Some(seq);
    while let Some(s) = cur {
        let e = &entries[s as usize];
        if let Some(c) = e.change {
            let value = match c.to {
                Term::Value(v) => Some(v),
                _ => None,
            };
            modified.set(c.attr, value);
        }
        cur = e.prev;
    }
    rules.iter().any(|&r| rule_matches(&policy.rules()[r], &modified))
}
