//! JSON documents for policies and requests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AttributeSchema, Category, Policy, Predicate, Relation, Request, Rule, Schema, Term, UNDEFINED,
    WILDCARD,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeDoc {
    pub name: String,
    pub category: Category,
    #[serde(default)]
    pub ordered: bool,
    pub domain: Vec<String>,
}

/// A predicate is either `{"rel": "=", "value": "x"}` or the shorthand `"x"` for equality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredicateDoc {
    Full {
        #[serde(default = "default_rel")]
        rel: String,
        value: String,
    },
    Short(String),
}

fn default_rel() -> String {
    "=".into()
}

impl PredicateDoc {
    fn parts(&self) -> (&str, &str) {
        match self {
            PredicateDoc::Full { rel, value } => (rel, value),
            PredicateDoc::Short(value) => ("=", value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDoc {
    pub id: u64,
    #[serde(default)]
    pub predicates: BTreeMap<String, PredicateDoc>,
    pub op: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDoc {
    pub schema: Vec<AttributeDoc>,
    pub operations: Vec<String>,
    #[serde(default)]
    pub rules: Vec<RuleDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestDoc {
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    pub op: String,
}

pub fn parse_policy(text: &str) -> Result<Policy> {
    let doc: PolicyDoc = serde_json::from_str(text)?;
    doc.to_policy()
}

pub fn serialize_policy(policy: &Policy) -> String {
    serde_json::to_string_pretty(&PolicyDoc::from_policy(policy)).expect("policy documents serialize")
}

pub fn parse_request(policy: &Policy, text: &str) -> Result<Request> {
    let doc: RequestDoc = serde_json::from_str(text)?;
    doc.to_request(policy, "request")
}

impl PolicyDoc {
    pub fn to_policy(&self) -> Result<Policy> {
        let schema = Schema::new(
            self.schema
                .iter()
                .map(|a| AttributeSchema {
                    name: a.name.clone(),
                    category: a.category,
                    ordered: a.ordered,
                    domain: a.domain.clone(),
                })
                .collect(),
        )?;
        let mut rules = Vec::with_capacity(self.rules.len());
        for (i, doc) in self.rules.iter().enumerate() {
            rules.push(doc.to_rule(&schema, &self.operations, &format!("rules[{i}]"))?);
        }
        Policy::new(schema, self.operations.clone(), rules)
    }

    pub fn from_policy(policy: &Policy) -> Self {
        let schema = policy.schema();
        PolicyDoc {
            schema: schema
                .attributes()
                .iter()
                .map(|a| AttributeDoc {
                    name: a.name.clone(),
                    category: a.category,
                    ordered: a.ordered,
                    domain: a.domain.clone(),
                })
                .collect(),
            operations: policy.operations().to_vec(),
            rules: policy
                .rules()
                .iter()
                .map(|r| RuleDoc {
                    id: r.id,
                    predicates: r
                        .predicates()
                        .iter()
                        .map(|p| {
                            (
                                schema.name(p.attr).to_owned(),
                                PredicateDoc::Full {
                                    rel: p.relation.symbol().to_owned(),
                                    value: schema.term_name(p.attr, p.term).to_owned(),
                                },
                            )
                        })
                        .collect(),
                    op: policy.rule_op_name(r).to_owned(),
                })
                .collect(),
        }
    }
}

impl RuleDoc {
    fn to_rule(&self, schema: &Schema, operations: &[String], location: &str) -> Result<Rule> {
        let mut predicates = Vec::with_capacity(self.predicates.len());
        for (name, doc) in &self.predicates {
            let location = format!("{location}.predicates.{name}");
            let attr = schema.attr(name).ok_or_else(|| Error::UnknownAttribute {
                location: location.clone(),
                attribute: name.clone(),
            })?;
            let (rel, value) = doc.parts();
            let relation = Relation::parse(rel)
                .ok_or_else(|| Error::invalid(&location, format!("unknown relation `{rel}`")))?;
            let term = schema.term(attr, value).ok_or_else(|| Error::ValueOutsideDomain {
                location: location.clone(),
                attribute: name.clone(),
                value: value.to_owned(),
            })?;
            predicates.push(Predicate {
                attr,
                relation,
                term,
            });
        }
        let operation = if self.op == WILDCARD {
            None
        } else {
            let idx = operations.iter().position(|o| *o == self.op).ok_or_else(|| {
                Error::UnknownOperation {
                    location: format!("{location}.op"),
                    operation: self.op.clone(),
                }
            })?;
            Some(crate::model::OpId(idx as u32))
        };
        Rule::new(self.id, predicates, operation)
    }
}

impl RequestDoc {
    pub fn to_request(&self, policy: &Policy, location: &str) -> Result<Request> {
        let schema = policy.schema();
        let op = policy.op_id(&self.op).ok_or_else(|| Error::UnknownOperation {
            location: format!("{location}.op"),
            operation: self.op.clone(),
        })?;
        let mut request = Request::undefined(schema, op);
        for (name, value) in &self.attributes {
            let location = format!("{location}.attributes.{name}");
            let attr = schema.attr(name).ok_or_else(|| Error::UnknownAttribute {
                location: location.clone(),
                attribute: name.clone(),
            })?;
            let value = match schema.term(attr, value) {
                Some(Term::Value(v)) => Some(v),
                Some(Term::Undefined) => None,
                _ => {
                    return Err(Error::ValueOutsideDomain {
                        location,
                        attribute: name.clone(),
                        value: value.clone(),
                    })
                }
            };
            request.set(attr, value);
        }
        Ok(request)
    }

    /// Undefined attributes are omitted.
    pub fn from_request(policy: &Policy, request: &Request) -> Self {
        let schema = policy.schema();
        RequestDoc {
            attributes: schema
                .ids()
                .filter_map(|a| {
                    request
                        .value(a)
                        .map(|v| (schema.name(a).to_owned(), schema.get(a).value_name(v).to_owned()))
                })
                .collect(),
            op: policy.op_name(request.operation).to_owned(),
        }
    }
}

/// Renders a request value, `#` for undefined.
pub fn value_token(policy: &Policy, attr: crate::model::AttrId, request: &Request) -> String {
    match request.value(attr) {
        Some(v) => policy.schema().get(attr).value_name(v).to_owned(),
        None => UNDEFINED.to_owned(),
    }
}
