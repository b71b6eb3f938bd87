//! Synthetic datasets: random policies with wildcards, entities, change
//! costs and request pools with a target allow/deny mix. Also the JSON
//! dataset file and the bundled healthcare toy dataset.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::document::{AttributeDoc, PolicyDoc, RequestDoc, RuleDoc};
use crate::error::{Error, Result};
use crate::meta::{MetaDoc, MetaPolicy};
use crate::model::{
    oracle_allows, AttrId, AttributeSchema, Category, OpId, Policy, Predicate, Request, Rule, Schema, Term, ValueId,
};

/// Seed used to sample costs missing from a loaded dataset file.
pub const LOAD_FILL_SEED: u64 = 0;

/// Per-slot attempts before a denial slot falls back to uniform sampling.
const NEAR_MISS_ATTEMPTS: usize = 64;
const UNIFORM_ATTEMPTS: usize = 256;

pub const HEALTHCARE_JSON: &str = include_str!("../data/healthcare.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub n_u: usize,
    pub n_o: usize,
    pub n_e: usize,
    pub u_a: usize,
    pub o_a: usize,
    pub e_a: usize,
    pub nv_u: usize,
    pub nv_o: usize,
    pub nv_e: usize,
    pub n_p: usize,
    pub n_ops: usize,
    pub wildcard_fraction: f64,
    pub target_allow_ratio: f64,
    /// Size of the request pool.
    #[serde(default = "default_n_requests")]
    pub n_requests: usize,
    /// Most attributes a denial sample changes away from its source rule.
    #[serde(default = "default_max_perturbations")]
    pub max_perturbations: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_requests() -> usize {
    10_000
}

fn default_max_perturbations() -> usize {
    3
}

impl DatasetParams {
    /// 1000 users, 1000 objects, 10 environments; 6 attributes of 4 values
    /// per category; 1000 rules over 3 operations.
    pub fn synthetic_1() -> Self {
        DatasetParams {
            n_u: 1000,
            n_o: 1000,
            n_e: 10,
            u_a: 6,
            o_a: 6,
            e_a: 6,
            nv_u: 4,
            nv_o: 4,
            nv_e: 4,
            n_p: 1000,
            n_ops: 3,
            wildcard_fraction: 0.4,
            target_allow_ratio: 0.7,
            n_requests: 10_000,
            max_perturbations: 3,
            seed: 1,
        }
    }

    /// 2000 users, 1500 objects, 20 environments; 8/8/6 attributes of
    /// 5/5/4 values; 2000 rules over a single operation.
    pub fn synthetic_2() -> Self {
        DatasetParams {
            n_u: 2000,
            n_o: 1500,
            n_e: 20,
            u_a: 8,
            o_a: 8,
            e_a: 6,
            nv_u: 5,
            nv_o: 5,
            nv_e: 4,
            n_p: 2000,
            n_ops: 1,
            wildcard_fraction: 0.4,
            target_allow_ratio: 0.7,
            n_requests: 10_000,
            max_perturbations: 3,
            seed: 2,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.replace('-', "_").as_str() {
            "synthetic_1" | "synthetic1" => Some(Self::synthetic_1()),
            "synthetic_2" | "synthetic2" => Some(Self::synthetic_2()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_u", self.n_u),
            ("n_o", self.n_o),
            ("n_e", self.n_e),
            ("u_a", self.u_a),
            ("o_a", self.o_a),
            ("e_a", self.e_a),
            ("nv_u", self.nv_u),
            ("nv_o", self.nv_o),
            ("nv_e", self.nv_e),
            ("n_p", self.n_p),
            ("n_ops", self.n_ops),
            ("max_perturbations", self.max_perturbations),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(Error::invalid(format!("params.{name}"), "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.wildcard_fraction) {
            return Err(Error::invalid("params.wildcard_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.target_allow_ratio) {
            return Err(Error::invalid("params.target_allow_ratio", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub id: String,
    /// One value per attribute of the entity's category, in schema order.
    pub attributes: Vec<Option<ValueId>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Entities {
    pub users: Vec<Entity>,
    pub objects: Vec<Entity>,
    pub envs: Vec<Entity>,
}

impl Entities {
    fn of(&self, category: Category) -> &[Entity] {
        match category {
            Category::User => &self.users,
            Category::Object => &self.objects,
            Category::Environment => &self.envs,
            Category::Operation => &[],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub policy: Arc<Policy>,
    pub meta: MetaPolicy,
    pub entities: Entities,
    pub requests: Vec<Request>,
}

fn category_attrs(schema: &Schema, category: Category) -> Vec<AttrId> {
    schema.ids().filter(|&a| schema.get(a).category == category).collect()
}

/// Builds a random policy, entities, costs and request pool from `params`.
pub fn generate_dataset<R: Rng + ?Sized>(params: &DatasetParams, rng: &mut R) -> Result<Dataset> {
    params.validate()?;
    let mut attrs = Vec::new();
    for (prefix, category, count, values) in [
        ("ua", Category::User, params.u_a, params.nv_u),
        ("oa", Category::Object, params.o_a, params.nv_o),
        ("ea", Category::Environment, params.e_a, params.nv_e),
    ] {
        for i in 0..count {
            let domain: Vec<String> = (0..values).map(|v| format!("v{v}")).collect();
            attrs.push(AttributeSchema::new(format!("{prefix}{i}"), category, domain));
        }
    }
    let schema = Schema::new(attrs)?;
    let operations: Vec<String> = (0..params.n_ops).map(|i| format!("op{i}")).collect();

    let mut rules = Vec::with_capacity(params.n_p);
    for id in 1..=params.n_p as u64 {
        let mut predicates = Vec::new();
        for a in schema.ids() {
            let value = ValueId(rng.gen_range(0..schema.get(a).domain.len() as u32));
            if !rng.gen_bool(params.wildcard_fraction) {
                predicates.push(Predicate::eq(a, Term::Value(value)));
            }
        }
        let op = OpId(rng.gen_range(0..params.n_ops as u32));
        rules.push(Rule::new(id, predicates, Some(op))?);
    }
    let policy = Arc::new(Policy::new(schema, operations, rules)?);
    let schema = policy.schema();

    let mut entities = Entities::default();
    for (category, count, prefix) in [
        (Category::User, params.n_u, "u"),
        (Category::Object, params.n_o, "o"),
        (Category::Environment, params.n_e, "e"),
    ] {
        let ids = category_attrs(schema, category);
        let list: Vec<Entity> = (0..count)
            .map(|i| Entity {
                id: format!("{prefix}{i}"),
                attributes: ids
                    .iter()
                    .map(|&a| Some(ValueId(rng.gen_range(0..schema.get(a).domain.len() as u32))))
                    .collect(),
            })
            .collect();
        match category {
            Category::User => entities.users = list,
            Category::Object => entities.objects = list,
            _ => entities.envs = list,
        }
    }

    let meta = MetaPolicy::sample_defaults(schema, rng)?;
    let mut dataset = Dataset {
        policy,
        meta,
        entities,
        requests: Vec::new(),
    };
    dataset.requests = generate_requests(
        &dataset,
        params.n_requests,
        params.target_allow_ratio,
        params.max_perturbations,
        rng,
    )?;
    Ok(dataset)
}

/// [`generate_dataset`] seeded from `params.seed`.
pub fn generate(params: &DatasetParams) -> Result<Dataset> {
    generate_dataset(params, &mut ChaCha8Rng::seed_from_u64(params.seed))
}

/// Draws `n` requests of which `round(n * target_allow_ratio)` are allowed.
///
/// Allowed requests start from a random rule and fill the attributes it
/// leaves open from random entities. Denied requests take such a sample and
/// move between one and `max_perturbations` of the rule's constrained
/// attributes to other values, falling back to entity-combination requests
/// when that keeps being allowed. Every request is checked with the linear
/// scan.
pub fn generate_requests<R: Rng + ?Sized>(
    dataset: &Dataset,
    n: usize,
    target_allow_ratio: f64,
    max_perturbations: usize,
    rng: &mut R,
) -> Result<Vec<Request>> {
    if !(0.0..=1.0).contains(&target_allow_ratio) {
        return Err(Error::invalid("target_allow_ratio", "must lie in [0, 1]"));
    }
    let policy = &dataset.policy;
    let n_allow = (n as f64 * target_allow_ratio).round() as usize;
    if n_allow > 0 && policy.rules().is_empty() {
        return Err(Error::TargetUnreachable {
            target: target_allow_ratio,
            reason: "the policy has no rules".into(),
        });
    }
    if policy.operations().is_empty() && n > 0 {
        return Err(Error::TargetUnreachable {
            target: target_allow_ratio,
            reason: "the policy has no operations".into(),
        });
    }
    let mut slots: Vec<bool> = (0..n).map(|i| i < n_allow).collect();
    slots.shuffle(rng);

    let sampler = Sampler::new(dataset);
    let mut out = Vec::with_capacity(n);
    for allow in slots {
        let request = if allow {
            let rule = &policy.rules()[rng.gen_range(0..policy.rules().len())];
            sampler.from_rule(rule, rng)
        } else {
            sampler.denied(max_perturbations, rng).ok_or_else(|| Error::TargetUnreachable {
                target: target_allow_ratio,
                reason: "could not sample a denied request".into(),
            })?
        };
        out.push(request);
    }
    Ok(out)
}

struct Sampler<'a> {
    dataset: &'a Dataset,
    /// (attribute, entity category, position within the category)
    layout: Vec<(AttrId, Category, usize)>,
}

impl<'a> Sampler<'a> {
    fn new(dataset: &'a Dataset) -> Self {
        let schema = dataset.policy.schema();
        let mut seen = BTreeMap::<Category, usize>::new();
        let layout = schema
            .ids()
            .map(|a| {
                let c = schema.get(a).category;
                let slot = seen.entry(c).or_default();
                let pos = *slot;
                *slot += 1;
                (a, c, pos)
            })
            .collect();
        Sampler { dataset, layout }
    }

    /// Values from one random user, object and environment; uniform values
    /// where no entity is available.
    fn from_entities<R: Rng + ?Sized>(&self, op: OpId, rng: &mut R) -> Request {
        let schema = self.dataset.policy.schema();
        let picks: BTreeMap<Category, Option<&Entity>> = [Category::User, Category::Object, Category::Environment]
            .into_iter()
            .map(|c| (c, self.dataset.entities.of(c).choose(rng)))
            .collect();
        let mut request = Request::undefined(schema, op);
        for &(a, c, pos) in &self.layout {
            let value = match picks.get(&c).copied().flatten() {
                Some(e) if pos < e.attributes.len() => e.attributes[pos],
                _ => Some(ValueId(rng.gen_range(0..schema.get(a).domain.len() as u32))),
            };
            request.set(a, value);
        }
        request
    }

    fn from_rule<R: Rng + ?Sized>(&self, rule: &Rule, rng: &mut R) -> Request {
        let policy = &self.dataset.policy;
        let op = rule
            .operation
            .unwrap_or_else(|| OpId(rng.gen_range(0..policy.operations().len() as u32)));
        let mut request = self.from_entities(op, rng);
        for p in rule.predicates() {
            match p.term {
                Term::Value(v) => request.set(p.attr, Some(v)),
                Term::Undefined => request.set(p.attr, None),
                Term::Any => {}
            }
        }
        request
    }

    fn denied<R: Rng + ?Sized>(&self, max_perturbations: usize, rng: &mut R) -> Option<Request> {
        let policy = &self.dataset.policy;
        let schema = policy.schema();
        if !policy.rules().is_empty() {
            for _ in 0..NEAR_MISS_ATTEMPTS {
                let rule = &policy.rules()[rng.gen_range(0..policy.rules().len())];
                let constrained: Vec<AttrId> = rule
                    .constraints()
                    .map(|p| p.attr)
                    .filter(|&a| schema.get(a).domain.len() > 1)
                    .collect();
                if constrained.is_empty() {
                    continue;
                }
                let mut request = self.from_rule(rule, rng);
                let k = rng.gen_range(1..=max_perturbations.min(constrained.len()));
                for &a in constrained.choose_multiple(rng, k) {
                    let size = schema.get(a).domain.len() as u32;
                    let current = request.value(a);
                    let mut v = ValueId(rng.gen_range(0..size - 1));
                    if Some(v) >= current {
                        v = ValueId(v.0 + 1);
                    }
                    // Rules pinning `#` leave `current` undefined; any value moves away.
                    if current.is_none() {
                        v = ValueId(rng.gen_range(0..size));
                    }
                    request.set(a, Some(v));
                }
                if !oracle_allows(policy, &request) {
                    return Some(request);
                }
            }
        }
        for _ in 0..UNIFORM_ATTEMPTS {
            let op = OpId(rng.gen_range(0..policy.operations().len() as u32));
            let request = self.from_entities(op, rng);
            if !oracle_allows(policy, &request) {
                return Some(request);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityDoc {
    pub id: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntitiesDoc {
    #[serde(default)]
    pub users: Vec<EntityDoc>,
    #[serde(default)]
    pub objects: Vec<EntityDoc>,
    #[serde(default)]
    pub envs: Vec<EntityDoc>,
}

/// Policy document plus meta-policy, entities and requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDoc {
    pub schema: Vec<AttributeDoc>,
    pub operations: Vec<String>,
    #[serde(default)]
    pub rules: Vec<RuleDoc>,
    #[serde(default)]
    pub meta: MetaDoc,
    #[serde(default)]
    pub entities: EntitiesDoc,
    #[serde(default)]
    pub requests: Vec<RequestDoc>,
}

impl DatasetDoc {
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let policy = &dataset.policy;
        let schema = policy.schema();
        let PolicyDoc {
            schema: attrs,
            operations,
            rules,
        } = PolicyDoc::from_policy(policy);
        let entity_docs = |category: Category, list: &[Entity]| -> Vec<EntityDoc> {
            let ids = category_attrs(schema, category);
            list.iter()
                .map(|e| EntityDoc {
                    id: e.id.clone(),
                    attributes: ids
                        .iter()
                        .zip(&e.attributes)
                        .filter_map(|(&a, v)| v.map(|v| (schema.name(a).to_owned(), schema.get(a).value_name(v).to_owned())))
                        .collect(),
                })
                .collect()
        };
        DatasetDoc {
            schema: attrs,
            operations,
            rules,
            meta: dataset.meta.to_doc(schema),
            entities: EntitiesDoc {
                users: entity_docs(Category::User, &dataset.entities.users),
                objects: entity_docs(Category::Object, &dataset.entities.objects),
                envs: entity_docs(Category::Environment, &dataset.entities.envs),
            },
            requests: dataset
                .requests
                .iter()
                .map(|r| RequestDoc::from_request(policy, r))
                .collect(),
        }
    }

    /// Validates everything; attributes without a cost get a default one.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let policy = PolicyDoc {
            schema: self.schema.clone(),
            operations: self.operations.clone(),
            rules: self.rules.clone(),
        }
        .to_policy()?;
        let schema = policy.schema();
        let mut fill = ChaCha8Rng::seed_from_u64(LOAD_FILL_SEED);
        let meta = self.meta.to_meta(schema, Some(&mut fill))?;

        let entities_of = |category: Category, docs: &[EntityDoc], key: &str| -> Result<Vec<Entity>> {
            let ids = category_attrs(schema, category);
            docs.iter()
                .enumerate()
                .map(|(i, d)| {
                    let location = format!("entities.{key}[{i}]");
                    for name in d.attributes.keys() {
                        if !ids.iter().any(|&a| schema.name(a) == name) {
                            return Err(Error::UnknownAttribute {
                                location: location.clone(),
                                attribute: name.clone(),
                            });
                        }
                    }
                    let attributes = ids
                        .iter()
                        .map(|&a| match d.attributes.get(schema.name(a)) {
                            None => Ok(None),
                            Some(token) => match schema.term(a, token) {
                                Some(Term::Value(v)) => Ok(Some(v)),
                                Some(Term::Undefined) => Ok(None),
                                _ => Err(Error::ValueOutsideDomain {
                                    location: format!("{location}.{}", schema.name(a)),
                                    attribute: schema.name(a).to_owned(),
                                    value: token.clone(),
                                }),
                            },
                        })
                        .collect::<Result<_>>()?;
                    Ok(Entity {
                        id: d.id.clone(),
                        attributes,
                    })
                })
                .collect()
        };
        let entities = Entities {
            users: entities_of(Category::User, &self.entities.users, "users")?,
            objects: entities_of(Category::Object, &self.entities.objects, "objects")?,
            envs: entities_of(Category::Environment, &self.entities.envs, "envs")?,
        };
        let requests = self
            .requests
            .iter()
            .enumerate()
            .map(|(i, r)| r.to_request(&policy, &format!("requests[{i}]")))
            .collect::<Result<_>>()?;
        Ok(Dataset {
            policy: Arc::new(policy),
            meta,
            entities,
            requests,
        })
    }
}

impl Dataset {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DatasetDoc::from_dataset(self)).expect("dataset documents serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// The bundled healthcare toy dataset.
    pub fn healthcare() -> Self {
        parse_dataset(HEALTHCARE_JSON).expect("bundled dataset is valid")
    }

    pub fn allowed_count(&self) -> usize {
        self.requests
            .iter()
            .filter(|r| oracle_allows(&self.policy, r))
            .count()
    }
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let doc: DatasetDoc = serde_json::from_str(text)?;
    doc.to_dataset()
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::default_cost_range;

    fn small() -> DatasetParams {
        DatasetParams {
            n_u: 20,
            n_o: 20,
            n_e: 3,
            u_a: 3,
            o_a: 3,
            e_a: 2,
            nv_u: 3,
            nv_o: 3,
            nv_e: 2,
            n_p: 30,
            n_ops: 2,
            wildcard_fraction: 0.4,
            target_allow_ratio: 0.7,
            n_requests: 200,
            max_perturbations: 2,
            seed: 9,
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&small()).unwrap().to_json();
        let b = generate(&small()).unwrap().to_json();
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 10;
        assert_ne!(a, generate(&other).unwrap().to_json());
    }

    #[test]
    fn shapes_follow_params() {
        let d = generate(&small()).unwrap();
        assert_eq!(d.policy.rules().len(), 30);
        assert_eq!(d.policy.schema().len(), 8);
        assert_eq!(d.policy.operations().len(), 2);
        assert_eq!(d.entities.users.len(), 20);
        assert_eq!(d.entities.envs[0].attributes.len(), 2);
        assert_eq!(d.requests.len(), 200);
        assert_eq!(d.allowed_count(), 140);
    }

    #[test]
    fn costs_respect_category_ranges() {
        let d = generate(&small()).unwrap();
        let s = d.policy.schema();
        for a in s.ids() {
            let (lo, hi) = default_cost_range(s.get(a).category).unwrap();
            let c = d.meta.attribute_cost(a);
            assert!((lo..=hi).contains(&c), "{} = {c}", s.name(a));
        }
    }

    #[test]
    fn no_wildcards_single_rule() {
        let mut p = small();
        p.n_p = 1;
        p.wildcard_fraction = 0.0;
        let d = generate(&p).unwrap();
        assert_eq!(d.policy.rules()[0].predicates().len(), d.policy.schema().len());
    }

    #[test]
    fn wildcard_rate_is_close_to_target() {
        let mut p = small();
        p.n_p = 600;
        p.n_requests = 0;
        let d = generate(&p).unwrap();
        let total = d.policy.rules().len() * d.policy.schema().len();
        let concrete: usize = d.policy.rules().iter().map(|r| r.predicates().len()).sum();
        let rate = 1.0 - concrete as f64 / total as f64;
        assert!((rate - 0.4).abs() <= 0.03, "{rate}");
    }

    #[test]
    fn extreme_targets() {
        let d = generate(&small()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let none = generate_requests(&d, 50, 0.0, 2, &mut rng).unwrap();
        assert!(none.iter().all(|r| !oracle_allows(&d.policy, r)));
        assert!(generate_requests(&d, 0, 0.7, 2, &mut rng).unwrap().is_empty());

        let empty = Dataset {
            policy: Arc::new(Policy::new(d.policy.schema().clone(), vec!["op".into()], vec![]).unwrap()),
            ..d
        };
        assert!(matches!(
            generate_requests(&empty, 10, 0.5, 2, &mut rng),
            Err(Error::TargetUnreachable { .. })
        ));
    }

    #[test]
    fn save_and_load_round_trip() {
        let d = generate(&small()).unwrap();
        let back = parse_dataset(&d.to_json()).unwrap();
        assert_eq!(back.to_json(), d.to_json());
        assert_eq!(back.requests, d.requests);
        assert_eq!(back.entities, d.entities);
    }

    #[test]
    fn undeclared_request_attribute_is_rejected() {
        let d = generate(&small()).unwrap();
        let mut doc = DatasetDoc::from_dataset(&d);
        doc.requests[0].attributes.insert("shoe_size".into(), "v1".into());
        let err = doc.to_dataset().unwrap_err();
        assert!(matches!(err, Error::UnknownAttribute { .. }));
        assert!(err.to_string().contains("requests[0]"));
    }

    #[test]
    fn missing_costs_are_filled_on_load() {
        let d = generate(&small()).unwrap();
        let mut doc = DatasetDoc::from_dataset(&d);
        doc.meta.costs.clear();
        let back = doc.to_dataset().unwrap();
        let s = back.policy.schema();
        for a in s.ids() {
            let (lo, hi) = default_cost_range(s.get(a).category).unwrap();
            assert!((lo..=hi).contains(&back.meta.attribute_cost(a)));
        }
    }

    #[test]
    fn bundled_healthcare_dataset_loads() {
        let d = Dataset::healthcare();
        assert_eq!(d.policy.rules().len(), 6);
        assert!(!d.requests.is_empty());
        assert!(d.allowed_count() < d.requests.len());
    }
}
