//! Small hand-written policies used by tests, the CLI and the browser demo.

use crate::document::parse_policy;
use crate::meta::MetaPolicy;
use crate::model::{Policy, Request};
use crate::tree::SplitHeuristic;

/// Three allow rules over four user attributes and a single operation.
pub const WORKED_EXAMPLE_JSON: &str = r#"{
  "schema": [
    { "name": "role", "category": "user", "domain": ["admin", "intern", "manager"] },
    { "name": "department", "category": "user", "domain": ["HR", "Finance", "General"] },
    { "name": "clearance", "category": "user", "ordered": true, "domain": ["low", "medium", "high"] },
    { "name": "training_over", "category": "user", "domain": ["yes", "no"] }
  ],
  "operations": ["access"],
  "rules": [
    { "id": 1, "predicates": { "role": { "rel": "=", "value": "admin" } }, "op": "access" },
    { "id": 2, "predicates": { "role": { "rel": "=", "value": "intern" },
                               "clearance": { "rel": "=", "value": "medium" } }, "op": "access" },
    { "id": 3, "predicates": { "role": { "rel": "=", "value": "manager" },
                               "clearance": { "rel": "=", "value": "low" },
                               "department": { "rel": "=", "value": "HR" } }, "op": "access" }
  ]
}"#;

/// Attribute change costs shared by both sample policies.
pub const EXAMPLE_COSTS: [(&str, f64); 5] = [
    ("role", 80.0),
    ("clearance", 70.0),
    ("department", 50.0),
    ("training_over", 20.0),
    ("sensitivity", 90.0),
];

/// The worked example extended with a Finance branch, a high-clearance branch
/// and an object sensitivity attribute.
pub const VISIBILITY_EXAMPLE_JSON: &str = r#"{
  "schema": [
    { "name": "role", "category": "user", "domain": ["admin", "intern", "manager"] },
    { "name": "department", "category": "user", "domain": ["HR", "Finance", "General"] },
    { "name": "clearance", "category": "user", "ordered": true, "domain": ["low", "medium", "high"] },
    { "name": "training_over", "category": "user", "domain": ["yes", "no"] },
    { "name": "sensitivity", "category": "object", "ordered": true, "domain": ["low", "medium", "high"] }
  ],
  "operations": ["access"],
  "rules": [
    { "id": 1, "predicates": { "role": "admin" }, "op": "access" },
    { "id": 2, "predicates": { "role": "intern", "clearance": "medium" }, "op": "access" },
    { "id": 3, "predicates": { "role": "manager", "clearance": "low", "department": "HR",
                               "sensitivity": "medium" }, "op": "access" },
    { "id": 4, "predicates": { "role": "manager", "clearance": "medium", "department": "Finance",
                               "training_over": "yes", "sensitivity": "medium" }, "op": "access" },
    { "id": 5, "predicates": { "role": "manager", "clearance": "high", "department": "HR",
                               "sensitivity": "medium" }, "op": "access" }
  ]
}"#;

/// Attribute-value pairs hidden in the visibility example, for every actor.
pub const VISIBILITY_EXAMPLE_HIDDEN: [(&str, &str); 3] = [
    ("clearance", "medium"),
    ("clearance", "high"),
    ("department", "Finance"),
];

pub const EXAMPLE_HEURISTIC: SplitHeuristic = SplitHeuristic::HighCostFirst;

pub fn worked_example_policy() -> Policy {
    parse_policy(WORKED_EXAMPLE_JSON).expect("bundled policy is valid")
}

pub fn visibility_example_policy() -> Policy {
    parse_policy(VISIBILITY_EXAMPLE_JSON).expect("bundled policy is valid")
}

/// [`EXAMPLE_COSTS`] restricted to the attributes of `policy`, bounds 0..100.
pub fn example_meta(policy: &Policy) -> MetaPolicy {
    let schema = policy.schema();
    let mut meta = MetaPolicy::uniform(schema, 0.0);
    for (name, cost) in EXAMPLE_COSTS {
        if let Some(attr) = schema.attr(name) {
            meta.set_attribute_cost(attr, cost).expect("cost inside bounds");
        }
    }
    meta
}

/// Manager with medium clearance in HR: denied by the worked example.
pub fn worked_example_request(policy: &Policy) -> Request {
    policy
        .request(
            &[("role", "manager"), ("clearance", "medium"), ("department", "HR")],
            "access",
        )
        .expect("sample request is valid")
}

/// Intern in General with low clearance and no training: denied by the worked example.
pub fn intern_request(policy: &Policy) -> Request {
    policy
        .request(
            &[
                ("role", "intern"),
                ("department", "General"),
                ("clearance", "low"),
                ("training_over", "no"),
            ],
            "access",
        )
        .expect("sample request is valid")
}

/// Trained manager in HR with medium clearance asking for a medium-sensitivity resource.
pub fn visibility_example_request(policy: &Policy) -> Request {
    policy
        .request(
            &[
                ("role", "manager"),
                ("clearance", "medium"),
                ("department", "HR"),
                ("training_over", "yes"),
                ("sensitivity", "medium"),
            ],
            "access",
        )
        .expect("sample request is valid")
}

/// [`example_meta`] with the [`VISIBILITY_EXAMPLE_HIDDEN`] pairs hidden from everyone.
pub fn visibility_example_meta(policy: &Policy) -> MetaPolicy {
    let mut meta = example_meta(policy);
    for (attr, value) in VISIBILITY_EXAMPLE_HIDDEN {
        let attr = policy.schema().attr(attr).expect("attribute exists");
        let term = policy.schema().term(attr, value).expect("value exists");
        meta.set_value_visibility(attr, term, None, false);
    }
    meta
}
