//! The attribute-based access control data model.
//!
//! Attribute values, attributes and operations are interned: a [`Policy`] owns
//! the [`Schema`] that maps names to dense ids, and every other structure
//! (rules, requests, trees, meta-policies) refers to those ids. Names are only
//! needed at the document boundary.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved token: matches any value, including an undefined one.
pub const WILDCARD: &str = "*";
/// Reserved token: the attribute is undefined or unknown.
pub const UNDEFINED: &str = "#";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttrId(pub u16);

impl AttrId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Position of a value inside its attribute's domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    User,
    Object,
    Environment,
    Operation,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::User => "user",
            Category::Object => "object",
            Category::Environment => "environment",
            Category::Operation => "operation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSchema {
    pub name: String,
    pub category: Category,
    /// Declared order of `domain` is meaningful for relational predicates.
    pub ordered: bool,
    pub domain: Vec<String>,
}

impl AttributeSchema {
    pub fn new(
        name: impl Into<String>,
        category: Category,
        domain: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        AttributeSchema {
            name: name.into(),
            category,
            ordered: false,
            domain: domain.into_iter().map(Into::into).collect(),
        }
    }

    pub fn ordered(mut self) -> Self {
        self.ordered = true;
        self
    }

    pub fn value_id(&self, token: &str) -> Option<ValueId> {
        self.domain
            .iter()
            .position(|v| v == token)
            .map(|i| ValueId(i as u32))
    }

    pub fn value_name(&self, value: ValueId) -> &str {
        &self.domain[value.0 as usize]
    }

    pub fn domain_ids(&self) -> impl Iterator<Item = ValueId> {
        (0..self.domain.len() as u32).map(ValueId)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    attributes: Vec<AttributeSchema>,
    by_name: HashMap<String, AttrId>,
}

impl Schema {
    pub fn new(attributes: Vec<AttributeSchema>) -> Result<Self> {
        if attributes.len() > u16::MAX as usize {
            return Err(Error::invalid("schema", "too many attributes"));
        }
        let mut by_name = HashMap::with_capacity(attributes.len());
        for (i, attr) in attributes.iter().enumerate() {
            let location = format!("schema[{i}]");
            if attr.name.is_empty() || attr.name == WILDCARD || attr.name == UNDEFINED {
                return Err(Error::invalid(location, "attribute name must be a non-reserved identifier"));
            }
            if by_name.insert(attr.name.clone(), AttrId(i as u16)).is_some() {
                return Err(Error::invalid(location, format!("duplicate attribute `{}`", attr.name)));
            }
            if attr.domain.is_empty() {
                return Err(Error::invalid(location, format!("domain of `{}` is empty", attr.name)));
            }
            let mut seen = BTreeSet::new();
            for value in &attr.domain {
                if value == WILDCARD || value == UNDEFINED {
                    return Err(Error::invalid(
                        location,
                        format!("reserved token `{value}` inside the domain of `{}`", attr.name),
                    ));
                }
                if !seen.insert(value.as_str()) {
                    return Err(Error::invalid(
                        location,
                        format!("duplicate value `{value}` in the domain of `{}`", attr.name),
                    ));
                }
            }
        }
        Ok(Schema { attributes, by_name })
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attr(&self, name: &str) -> Option<AttrId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, attr: AttrId) -> &AttributeSchema {
        &self.attributes[attr.index()]
    }

    pub fn name(&self, attr: AttrId) -> &str {
        &self.attributes[attr.index()].name
    }

    pub fn attributes(&self) -> &[AttributeSchema] {
        &self.attributes
    }

    pub fn ids(&self) -> impl Iterator<Item = AttrId> {
        (0..self.attributes.len() as u16).map(AttrId)
    }

    /// Resolves a value token (including the reserved ones) for `attr`.
    pub fn term(&self, attr: AttrId, token: &str) -> Option<Term> {
        match token {
            WILDCARD => Some(Term::Any),
            UNDEFINED => Some(Term::Undefined),
            _ => self.get(attr).value_id(token).map(Term::Value),
        }
    }

    pub fn term_name(&self, attr: AttrId, term: Term) -> &str {
        match term {
            Term::Any => WILDCARD,
            Term::Undefined => UNDEFINED,
            Term::Value(v) => self.get(attr).value_name(v),
        }
    }

    pub fn value_name(&self, attr: AttrId, value: Option<ValueId>) -> &str {
        match value {
            Some(v) => self.get(attr).value_name(v),
            None => UNDEFINED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Ne => "!=",
            Relation::Lt => "<",
            Relation::Gt => ">",
            Relation::Le => "<=",
            Relation::Ge => ">=",
        }
    }

    pub fn parse(symbol: &str) -> Option<Self> {
        Some(match symbol {
            "=" | "==" => Relation::Eq,
            "!=" | "≠" => Relation::Ne,
            "<" => Relation::Lt,
            ">" => Relation::Gt,
            "<=" | "≤" => Relation::Le,
            ">=" | "≥" => Relation::Ge,
            _ => return None,
        })
    }

    pub fn is_ordering(self) -> bool {
        matches!(self, Relation::Lt | Relation::Gt | Relation::Le | Relation::Ge)
    }
}

/// The right-hand side of a predicate, or the label of a tree edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Value(ValueId),
    Undefined,
    Any,
}

impl Term {
    /// The term a request value is tested against on an exact edge.
    pub fn of(value: Option<ValueId>) -> Term {
        value.map_or(Term::Undefined, Term::Value)
    }

    pub fn is_concrete(self) -> bool {
        !matches!(self, Term::Any)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Predicate {
    pub attr: AttrId,
    pub relation: Relation,
    pub term: Term,
}

impl Predicate {
    pub fn eq(attr: AttrId, term: Term) -> Self {
        Predicate {
            attr,
            relation: Relation::Eq,
            term,
        }
    }

    /// `value` is the request's value for this predicate's attribute.
    pub fn is_satisfied_by(&self, value: Option<ValueId>) -> bool {
        match (self.relation, self.term) {
            (_, Term::Any) => true,
            (_, Term::Undefined) => value.is_none(),
            (Relation::Eq, Term::Value(v)) => value == Some(v),
            // An undefined attribute satisfies no comparison against a concrete value.
            (relation, Term::Value(v)) => match value {
                None => false,
                Some(x) => match relation {
                    Relation::Ne => x != v,
                    Relation::Lt => x < v,
                    Relation::Gt => x > v,
                    Relation::Le => x <= v,
                    Relation::Ge => x >= v,
                    Relation::Eq => unreachable!(),
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub id: u64,
    /// Sorted by attribute, at most one per attribute.
    predicates: Vec<Predicate>,
    /// `None` is the wildcard operation.
    pub operation: Option<OpId>,
}

impl Rule {
    pub fn new(id: u64, mut predicates: Vec<Predicate>, operation: Option<OpId>) -> Result<Self> {
        predicates.sort_by_key(|p| p.attr);
        if let Some(w) = predicates.windows(2).find(|w| w[0].attr == w[1].attr) {
            return Err(Error::invalid(
                format!("rule {id}"),
                format!("more than one predicate on attribute #{}", w[0].attr.0),
            ));
        }
        Ok(Rule {
            id,
            predicates,
            operation,
        })
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn predicate(&self, attr: AttrId) -> Option<&Predicate> {
        self.predicates
            .binary_search_by_key(&attr, |p| p.attr)
            .ok()
            .map(|i| &self.predicates[i])
    }

    /// Equality view of the rule on `attr`: absent predicates read as `*`.
    pub fn term(&self, attr: AttrId) -> Term {
        self.predicate(attr).map_or(Term::Any, |p| p.term)
    }

    /// Predicates that actually constrain a request.
    pub fn constraints(&self) -> impl Iterator<Item = &Predicate> {
        self.predicates.iter().filter(|p| p.term != Term::Any)
    }

    pub fn matches(&self, request: &Request) -> bool {
        rule_matches(self, request)
    }
}

/// True iff every predicate of `rule` holds for `request` and the operations agree.
pub fn rule_matches(rule: &Rule, request: &Request) -> bool {
    if let Some(op) = rule.operation {
        if op != request.operation {
            return false;
        }
    }
    rule.predicates
        .iter()
        .all(|p| p.is_satisfied_by(request.value(p.attr)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    schema: Schema,
    operations: Vec<String>,
    rules: Vec<Rule>,
}

impl Policy {
    pub fn new(schema: Schema, operations: Vec<String>, rules: Vec<Rule>) -> Result<Self> {
        let mut seen_ops = BTreeSet::new();
        for (i, op) in operations.iter().enumerate() {
            if op.is_empty() || op == WILDCARD || op == UNDEFINED {
                return Err(Error::invalid(format!("operations[{i}]"), "operation must be a non-reserved token"));
            }
            if !seen_ops.insert(op.as_str()) {
                return Err(Error::invalid(format!("operations[{i}]"), format!("duplicate operation `{op}`")));
            }
        }
        let mut ids = BTreeSet::new();
        for (i, rule) in rules.iter().enumerate() {
            let location = format!("rules[{i}]");
            if !ids.insert(rule.id) {
                return Err(Error::DuplicateRuleId { location, id: rule.id });
            }
            if let Some(op) = rule.operation {
                if op.0 as usize >= operations.len() {
                    return Err(Error::invalid(location, "operation id out of range"));
                }
            }
            for p in &rule.predicates {
                if p.attr.index() >= schema.len() {
                    return Err(Error::invalid(location, "attribute id out of range"));
                }
                let attr = schema.get(p.attr);
                let location = format!("{location}.predicates.{}", attr.name);
                check_predicate(attr, p, &location)?;
            }
        }
        Ok(Policy {
            schema,
            operations,
            rules,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn operations(&self) -> &[String] {
        &self.operations
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn op_id(&self, name: &str) -> Option<OpId> {
        self.operations
            .iter()
            .position(|o| o == name)
            .map(|i| OpId(i as u32))
    }

    pub fn op_name(&self, op: OpId) -> &str {
        &self.operations[op.0 as usize]
    }

    pub fn rule_op_name(&self, rule: &Rule) -> &str {
        rule.operation.map_or(WILDCARD, |op| self.op_name(op))
    }

    pub fn rule_by_id(&self, id: u64) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Builds a request from attribute/value names.
    pub fn request(&self, assignments: &[(&str, &str)], operation: &str) -> Result<Request> {
        let op = self.op_id(operation).ok_or_else(|| Error::UnknownOperation {
            location: "request.op".into(),
            operation: operation.into(),
        })?;
        let mut request = Request::undefined(&self.schema, op);
        for &(name, value) in assignments {
            let location = format!("request.attributes.{name}");
            let attr = self.schema.attr(name).ok_or_else(|| Error::UnknownAttribute {
                location: location.clone(),
                attribute: name.into(),
            })?;
            let value = match value {
                UNDEFINED => None,
                token => Some(self.schema.get(attr).value_id(token).ok_or_else(|| {
                    Error::ValueOutsideDomain {
                        location,
                        attribute: name.into(),
                        value: token.into(),
                    }
                })?),
            };
            request.set(attr, value);
        }
        Ok(request)
    }
}

fn check_predicate(attr: &AttributeSchema, p: &Predicate, location: &str) -> Result<()> {
    if let Term::Value(v) = p.term {
        if v.0 as usize >= attr.domain.len() {
            return Err(Error::invalid(location, "value id out of range"));
        }
    }
    if p.relation != Relation::Eq && !matches!(p.term, Term::Value(_)) {
        return Err(Error::invalid(
            location,
            format!("`*` and `#` combine only with `=`, found `{}`", p.relation.symbol()),
        ));
    }
    if p.relation.is_ordering() && !attr.ordered {
        return Err(Error::invalid(
            location,
            format!("relation `{}` requires an ordered domain", p.relation.symbol()),
        ));
    }
    Ok(())
}

/// A (possibly partial) attribute assignment plus the requested operation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Request {
    values: Vec<Option<ValueId>>,
    pub operation: OpId,
}

impl Request {
    /// A request with every attribute undefined.
    pub fn undefined(schema: &Schema, operation: OpId) -> Self {
        Request {
            values: vec![None; schema.len()],
            operation,
        }
    }

    pub fn from_values(values: Vec<Option<ValueId>>, operation: OpId) -> Self {
        Request { values, operation }
    }

    #[inline]
    pub fn value(&self, attr: AttrId) -> Option<ValueId> {
        self.values.get(attr.index()).copied().flatten()
    }

    pub fn set(&mut self, attr: AttrId, value: Option<ValueId>) {
        self.values[attr.index()] = value;
    }

    pub fn values(&self) -> &[Option<ValueId>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check(&self, schema: &Schema, operations: usize) -> Result<()> {
        if self.values.len() != schema.len() {
            return Err(Error::invalid("request", "assignment width does not match the schema"));
        }
        if self.operation.0 as usize >= operations {
            return Err(Error::invalid("request.op", "operation id out of range"));
        }
        for attr in schema.ids() {
            if let Some(v) = self.value(attr) {
                if v.0 as usize >= schema.get(attr).domain.len() {
                    return Err(Error::invalid(
                        format!("request.attributes.{}", schema.name(attr)),
                        "value id out of range",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub outcome: Outcome,
    pub granted_operations: BTreeSet<String>,
    pub matched_rule_ids: BTreeSet<u64>,
}

impl Decision {
    pub fn deny() -> Self {
        Decision {
            outcome: Outcome::Deny,
            granted_operations: BTreeSet::new(),
            matched_rule_ids: BTreeSet::new(),
        }
    }

    pub fn from_matches<'a>(policy: &Policy, rules: impl IntoIterator<Item = &'a Rule>) -> Self {
        let mut decision = Decision::deny();
        for rule in rules {
            decision.matched_rule_ids.insert(rule.id);
            decision
                .granted_operations
                .insert(policy.rule_op_name(rule).to_owned());
        }
        if !decision.matched_rule_ids.is_empty() {
            decision.outcome = Outcome::Allow;
        }
        decision
    }

    pub fn is_allow(&self) -> bool {
        self.outcome == Outcome::Allow
    }
}

/// Reference evaluator: a linear scan over every rule.
pub fn oracle_decide(policy: &Policy, request: &Request) -> Decision {
    Decision::from_matches(policy, policy.rules.iter().filter(|r| rule_matches(r, request)))
}

/// Outcome-only linear scan that stops at the first matching rule.
pub fn oracle_allows(policy: &Policy, request: &Request) -> bool {
    policy.rules.iter().any(|r| rule_matches(r, request))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    #[test]
    fn worked_example_decisions() {
        let policy = samples::worked_example_policy();
        let denied = samples::worked_example_request(&policy);
        assert!(!oracle_decide(&policy, &denied).is_allow());
        assert!(policy.rules().iter().all(|r| !rule_matches(r, &denied)));

        let admin = policy.request(&[("role", "admin")], "access").unwrap();
        assert!(rule_matches(&policy.rules()[0], &admin));

        let intern = policy
            .request(&[("role", "intern"), ("clearance", "medium")], "access")
            .unwrap();
        let decision = oracle_decide(&policy, &intern);
        assert!(decision.is_allow());
        assert_eq!(decision.matched_rule_ids, BTreeSet::from([2]));
        assert_eq!(decision.granted_operations, BTreeSet::from(["access".to_owned()]));
    }

    #[test]
    fn wildcard_matches_undefined_but_hash_does_not_match_values() {
        let schema = Schema::new(vec![AttributeSchema::new("a", Category::User, ["x", "y"])]).unwrap();
        let a = AttrId(0);
        let any = Predicate::eq(a, Term::Any);
        let undef = Predicate::eq(a, Term::Undefined);
        assert!(any.is_satisfied_by(None));
        assert!(any.is_satisfied_by(Some(ValueId(1))));
        assert!(undef.is_satisfied_by(None));
        assert!(!undef.is_satisfied_by(Some(ValueId(0))));
        drop(schema);
    }

    #[test]
    fn relational_predicates_follow_domain_order() {
        let lt = Predicate {
            attr: AttrId(0),
            relation: Relation::Lt,
            term: Term::Value(ValueId(1)),
        };
        assert!(lt.is_satisfied_by(Some(ValueId(0))));
        assert!(!lt.is_satisfied_by(Some(ValueId(1))));
        assert!(!lt.is_satisfied_by(None));
        let ne = Predicate {
            relation: Relation::Ne,
            ..lt
        };
        assert!(ne.is_satisfied_by(Some(ValueId(2))));
        assert!(!ne.is_satisfied_by(Some(ValueId(1))));
    }

    #[test]
    fn rule_operation_must_match_unless_wildcard() {
        let schema = Schema::new(vec![AttributeSchema::new("a", Category::User, ["x"])]).unwrap();
        let policy = Policy::new(
            schema,
            vec!["read".into(), "write".into()],
            vec![
                Rule::new(1, vec![], Some(OpId(0))).unwrap(),
                Rule::new(2, vec![], None).unwrap(),
            ],
        )
        .unwrap();
        let write = policy.request(&[], "write").unwrap();
        assert!(!rule_matches(&policy.rules()[0], &write));
        assert!(rule_matches(&policy.rules()[1], &write));
        let decision = oracle_decide(&policy, &write);
        assert_eq!(decision.matched_rule_ids, BTreeSet::from([2]));
    }

    #[test]
    fn empty_policy_denies() {
        let schema = Schema::new(vec![AttributeSchema::new("a", Category::User, ["x"])]).unwrap();
        let policy = Policy::new(schema, vec!["op".into()], vec![]).unwrap();
        let q = policy.request(&[("a", "x")], "op").unwrap();
        assert_eq!(oracle_decide(&policy, &q), Decision::deny());
    }

    #[test]
    fn schema_rejects_reserved_and_duplicate_values() {
        assert!(Schema::new(vec![AttributeSchema::new("a", Category::User, ["*"])]).is_err());
        assert!(Schema::new(vec![AttributeSchema::new("a", Category::User, ["x", "x"])]).is_err());
        assert!(Schema::new(vec![AttributeSchema::new("a", Category::User, Vec::<String>::new())]).is_err());
    }

    #[test]
    fn ordering_relations_need_ordered_domain() {
        let schema = Schema::new(vec![AttributeSchema::new("a", Category::User, ["x", "y"])]).unwrap();
        let rule = Rule::new(
            1,
            vec![Predicate {
                attr: AttrId(0),
                relation: Relation::Ge,
                term: Term::Value(ValueId(0)),
            }],
            None,
        )
        .unwrap();
        assert!(Policy::new(schema, vec!["op".into()], vec![rule]).is_err());
    }

    #[test]
    fn duplicate_rule_ids_rejected() {
        let schema = Schema::new(vec![AttributeSchema::new("a", Category::User, ["x"])]).unwrap();
        let rules = vec![Rule::new(7, vec![], None).unwrap(), Rule::new(7, vec![], None).unwrap()];
        let err = Policy::new(schema, vec!["op".into()], rules).unwrap_err();
        assert!(matches!(err, Error::DuplicateRuleId { id: 7, .. }));
    }
}
