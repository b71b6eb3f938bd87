//! Explainable access control: ABAC policies compiled into decision trees,
//! fast evaluation, and cost-aware feedback for denied requests.

pub mod bench;
pub mod datagen;
pub mod document;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod meta;
pub mod model;
pub mod samples;
pub mod tree;

pub use document::{parse_policy, parse_request, serialize_policy, PolicyDoc, RequestDoc};
pub use error::{Error, Result};
pub use eval::{allows, evaluate, locate_deny_node, EvalOutcome};
pub use feedback::{
    apply_changes, feedback_search, oracle_min_feedback, search_from, Change, ChangeSet, FeedbackResult,
    SearchLimits, SearchStrategy,
};
pub use meta::{changeability, default_cost, MetaDoc, MetaPolicy, VisibilityView};
pub use model::{
    oracle_allows, oracle_decide, rule_matches, AttrId, Category, Decision, Outcome, Policy, Predicate, Relation,
    Request, Rule, Schema, Term, ValueId,
};
pub use tree::{build_tree, validate_tree, NodeId, PolicyTree, SplitHeuristic, TreeDoc};
