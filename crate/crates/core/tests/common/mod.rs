//! Random small policies, meta-policies and requests for the property suites.
#![allow(dead_code)]

use std::sync::Arc;

use abac_explain::{
    build_tree, AttrId, Category, MetaPolicy, Policy, PolicyTree, Predicate, Relation, Request, Rule, Schema,
    SplitHeuristic, Term, ValueId,
};
use abac_explain::model::{AttributeSchema, OpId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Encoded form, kept small so shrinking stays readable.
#[derive(Debug, Clone)]
pub struct Spec {
    pub domains: Vec<usize>,
    pub n_ops: usize,
    /// Per rule: one code per attribute and an operation code.
    pub rules: Vec<(Vec<u8>, u8)>,
    pub costs: Vec<u8>,
    pub requests: Vec<(Vec<u8>, u8)>,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub policy: Arc<Policy>,
    pub meta: MetaPolicy,
    pub requests: Vec<Request>,
}

impl Instance {
    pub fn tree(&self, heuristic: SplitHeuristic, seed: u64) -> PolicyTree {
        build_tree(&self.policy, heuristic, &self.meta, &mut ChaCha8Rng::seed_from_u64(seed)).expect("equality-only policies build")
    }
}

pub fn schema(domains: &[usize]) -> Schema {
    let categories = [Category::User, Category::Object, Category::Environment];
    Schema::new(
        domains
            .iter()
            .enumerate()
            .map(|(i, &d)| AttributeSchema::new(format!("a{i}"), categories[i % 3], (0..d).map(|v| format!("v{v}"))).ordered())
            .collect(),
    )
    .unwrap()
}

/// `0..6` leaves the attribute unconstrained, 15 requires it to be unset,
/// anything else picks a value.
pub fn rule_term(code: u8, domain: usize) -> Term {
    match code {
        0..=5 => Term::Any,
        15 => Term::Undefined,
        x => Term::Value(ValueId(((x - 6) as usize % domain) as u32)),
    }
}

/// 0 leaves the attribute unset, anything else picks a value.
pub fn request_value(code: u8, domain: usize) -> Option<ValueId> {
    (code != 0).then(|| ValueId((code as usize % domain) as u32))
}

pub fn operation(code: u8, n_ops: usize) -> OpId {
    OpId((code as usize % n_ops) as u32)
}

impl Spec {
    pub fn instance(&self) -> Instance {
        let schema = schema(&self.domains);
        let rules = self
            .rules
            .iter()
            .enumerate()
            .map(|(i, (codes, op))| {
                let predicates = codes
                    .iter()
                    .enumerate()
                    .filter_map(|(a, &c)| {
                        let term = rule_term(c, self.domains[a]);
                        (term != Term::Any).then(|| Predicate::eq(AttrId(a as u16), term))
                    })
                    .collect();
                // Every fifth rule grants any operation.
                let op = (op % 5 != 4).then(|| operation(*op, self.n_ops));
                Rule::new(i as u64 + 1, predicates, op).unwrap()
            })
            .collect();
        let ops = (0..self.n_ops).map(|o| format!("op{o}")).collect();
        let policy = Arc::new(Policy::new(schema, ops, rules).unwrap());
        let meta = MetaPolicy::new(self.costs.iter().map(|&c| c as f64).collect(), 0.0, 100.0).unwrap();
        let requests = self.requests.iter().map(|(codes, op)| self.request(codes, *op)).collect();
        Instance { policy, meta, requests }
    }

    pub fn request(&self, codes: &[u8], op: u8) -> Request {
        Request::from_values(
            codes.iter().zip(&self.domains).map(|(&c, &d)| request_value(c, d)).collect(),
            operation(op, self.n_ops),
        )
    }
}

/// Policies of up to `max_attrs` attributes with up to `max_values` values
/// each, up to `max_rules` rules and `n_requests` random requests.
pub fn specs(max_attrs: usize, max_values: usize, max_rules: usize, n_requests: usize) -> impl Strategy<Value = Spec> {
    (1..=max_attrs, 1..=2usize)
        .prop_flat_map(move |(n, n_ops)| {
            let codes = || prop::collection::vec(0u8..16, n);
            (
                prop::collection::vec(1..=max_values, n),
                Just(n_ops),
                prop::collection::vec((codes(), any::<u8>()), 0..=max_rules),
                prop::collection::vec(0u8..=100, n),
                prop::collection::vec((codes(), any::<u8>()), n_requests),
            )
        })
        .prop_map(|(domains, n_ops, rules, costs, requests)| Spec {
            domains,
            n_ops,
            rules,
            costs,
            requests,
        })
}

/// Every request over the schema: each attribute unset or any value, every operation.
pub fn all_requests(policy: &Policy) -> Vec<Request> {
    let schema = policy.schema();
    let mut out = vec![Vec::new()];
    for a in schema.ids() {
        let d = schema.get(a).domain.len();
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<Option<ValueId>>| {
                (0..=d).map(move |v| {
                    let mut next = prefix.clone();
                    next.push(v.checked_sub(1).map(|v| ValueId(v as u32)));
                    next
                })
            })
            .collect();
    }
    out.into_iter()
        .flat_map(|values| (0..policy.operations().len()).map(move |o| Request::from_values(values.clone(), OpId(o as u32))))
        .collect()
}

/// Predicate semantics written out directly, relations compared by domain position.
pub fn predicate_holds(p: &Predicate, value: Option<ValueId>) -> bool {
    match p.term {
        Term::Any => true,
        Term::Undefined => value.is_none(),
        Term::Value(v) => match value {
            None => false,
            Some(x) => match p.relation {
                Relation::Eq => x == v,
                Relation::Ne => x != v,
                Relation::Lt => x.0 < v.0,
                Relation::Gt => x.0 > v.0,
                Relation::Le => x.0 <= v.0,
                Relation::Ge => x.0 >= v.0,
            },
        },
    }
}

pub fn rule_holds(rule: &Rule, request: &Request) -> bool {
    rule.operation.is_none_or(|op| op == request.operation)
        && rule.predicates().iter().all(|p| predicate_holds(p, request.value(p.attr)))
}
