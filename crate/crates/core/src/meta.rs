//! Meta-policy: per-attribute change costs and binary visibility.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttrId, Category, Schema, Term, ValueId};

/// Default cost ranges per attribute category.
pub const ENVIRONMENT_COST_RANGE: (f64, f64) = (0.0, 40.0);
pub const USER_COST_RANGE: (f64, f64) = (50.0, 90.0);
pub const OBJECT_COST_RANGE: (f64, f64) = (80.0, 100.0);

pub const DEFAULT_COST_BOUNDS: (f64, f64) = (0.0, 100.0);

pub fn default_cost_range(category: Category) -> Option<(f64, f64)> {
    match category {
        Category::Environment => Some(ENVIRONMENT_COST_RANGE),
        Category::User => Some(USER_COST_RANGE),
        Category::Object => Some(OBJECT_COST_RANGE),
        Category::Operation => None,
    }
}

/// Samples a fallback change cost uniformly from the category's range.
pub fn default_cost<R: Rng + ?Sized>(category: Category, rng: &mut R) -> Result<f64> {
    let (lo, hi) = default_cost_range(category).ok_or_else(|| Error::NoDefaultCost(category.to_string()))?;
    Ok(rng.gen_range(lo..=hi))
}

/// Normalised ease of change: 100 at `cost_min`, 0 at `cost_max`.
pub fn changeability(cost: f64, cost_min: f64, cost_max: f64) -> Result<f64> {
    if !(cost_min < cost_max) {
        return Err(Error::DegenerateBounds {
            min: cost_min,
            max: cost_max,
        });
    }
    if !(cost_min..=cost_max).contains(&cost) {
        return Err(Error::CostOutOfBounds {
            cost,
            min: cost_min,
            max: cost_max,
        });
    }
    Ok(100.0 * (1.0 - (cost - cost_min) / (cost_max - cost_min)))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct VisibilityKey {
    attr: AttrId,
    /// `None` keys the whole attribute.
    value: Option<Term>,
    /// `None` applies to every actor.
    actor: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaPolicy {
    attribute_cost: Vec<f64>,
    transition_cost: HashMap<(AttrId, Term, Term), f64>,
    visibility: HashMap<VisibilityKey, bool>,
    cost_min: f64,
    cost_max: f64,
}

impl MetaPolicy {
    pub fn new(attribute_cost: Vec<f64>, cost_min: f64, cost_max: f64) -> Result<Self> {
        if !(cost_min <= cost_max) {
            return Err(Error::DegenerateBounds {
                min: cost_min,
                max: cost_max,
            });
        }
        for &cost in &attribute_cost {
            if !(cost_min..=cost_max).contains(&cost) {
                return Err(Error::CostOutOfBounds {
                    cost,
                    min: cost_min,
                    max: cost_max,
                });
            }
        }
        Ok(MetaPolicy {
            attribute_cost,
            transition_cost: HashMap::new(),
            visibility: HashMap::new(),
            cost_min,
            cost_max,
        })
    }

    /// Every attribute costs `cost`, bounds are the defaults.
    pub fn uniform(schema: &Schema, cost: f64) -> Self {
        MetaPolicy::new(vec![cost; schema.len()], DEFAULT_COST_BOUNDS.0, DEFAULT_COST_BOUNDS.1)
            .expect("uniform cost lies inside the default bounds")
    }

    /// Costs sampled from the default category ranges.
    pub fn sample_defaults<R: Rng + ?Sized>(schema: &Schema, rng: &mut R) -> Result<Self> {
        let costs = schema
            .attributes()
            .iter()
            .map(|a| default_cost(a.category, rng))
            .collect::<Result<Vec<_>>>()?;
        MetaPolicy::new(costs, DEFAULT_COST_BOUNDS.0, DEFAULT_COST_BOUNDS.1)
    }

    pub fn parse(schema: &Schema, text: &str) -> Result<Self> {
        let doc: MetaDoc = serde_json::from_str(text)?;
        doc.to_meta(schema, None::<&mut rand_chacha::ChaCha8Rng>)
    }

    pub fn cost_bounds(&self) -> (f64, f64) {
        (self.cost_min, self.cost_max)
    }

    pub fn attribute_cost(&self, attr: AttrId) -> f64 {
        self.attribute_cost[attr.index()]
    }

    pub fn attribute_costs(&self) -> &[f64] {
        &self.attribute_cost
    }

    pub fn set_attribute_cost(&mut self, attr: AttrId, cost: f64) -> Result<()> {
        if !(self.cost_min..=self.cost_max).contains(&cost) {
            return Err(Error::CostOutOfBounds {
                cost,
                min: self.cost_min,
                max: self.cost_max,
            });
        }
        self.attribute_cost[attr.index()] = cost;
        Ok(())
    }

    pub fn set_transition_cost(&mut self, attr: AttrId, from: Term, to: Term, cost: f64) -> Result<()> {
        if !(cost >= 0.0) {
            return Err(Error::invalid("transitions", format!("negative transition cost {cost}")));
        }
        if from == to && cost != 0.0 {
            return Err(Error::invalid("transitions", "identity transitions must cost 0"));
        }
        self.transition_cost.insert((attr, from, to), cost);
        Ok(())
    }

    /// Cost of moving `attr` from `from` to `to`: the transition table when it
    /// has an entry, the attribute's scalar cost otherwise, 0 for no change.
    pub fn change_cost(&self, attr: AttrId, from: Term, to: Term) -> f64 {
        if from == to {
            return 0.0;
        }
        self.transition_cost
            .get(&(attr, from, to))
            .copied()
            .unwrap_or(self.attribute_cost[attr.index()])
    }

    pub fn changeability(&self, attr: AttrId) -> Result<f64> {
        changeability(self.attribute_cost(attr), self.cost_min, self.cost_max)
    }

    /// `value = None` sets attribute-level visibility, `actor = None` applies to all actors.
    pub fn set_value_visibility(&mut self, attr: AttrId, value: Term, actor: Option<&str>, visible: bool) {
        self.visibility.insert(
            VisibilityKey {
                attr,
                value: Some(value),
                actor: actor.map(str::to_owned),
            },
            visible,
        );
    }

    pub fn set_visibility(&mut self, attr: AttrId, actor: Option<&str>, visible: bool) {
        self.visibility.insert(
            VisibilityKey {
                attr,
                value: None,
                actor: actor.map(str::to_owned),
            },
            visible,
        );
    }

    pub fn clear_visibility(&mut self) {
        self.visibility.clear();
    }

    /// Attribute-level visibility for `actor`. Unlisted pairs are visible.
    pub fn visible(&self, attr: AttrId, actor: &str) -> bool {
        self.lookup(attr, None, actor).unwrap_or(true)
    }

    /// Visibility of the predicate `attr = value` for `actor`. Lookup order:
    /// (attribute, value, actor), (attribute, value, any actor),
    /// (attribute, actor), (attribute, any actor), visible.
    pub fn value_visible(&self, attr: AttrId, value: Term, actor: &str) -> bool {
        self.lookup(attr, Some(value), actor)
            .or_else(|| self.lookup(attr, None, actor))
            .unwrap_or(true)
    }

    fn lookup(&self, attr: AttrId, value: Option<Term>, actor: &str) -> Option<bool> {
        let mut key = VisibilityKey {
            attr,
            value,
            actor: Some(actor.to_owned()),
        };
        if let Some(&v) = self.visibility.get(&key) {
            return Some(v);
        }
        key.actor = None;
        self.visibility.get(&key).copied()
    }

    /// Visibility resolved for a single actor, for hot loops.
    pub fn view(&self, actor: &str) -> VisibilityView {
        let mut attr_level = vec![None; self.attribute_cost.len()];
        let mut value_level = HashMap::new();
        // Actor-specific entries win, so apply the generic ones first.
        for pass_specific in [false, true] {
            for (key, &visible) in &self.visibility {
                let applies = match &key.actor {
                    None => !pass_specific,
                    Some(a) => pass_specific && a == actor,
                };
                if !applies {
                    continue;
                }
                match key.value {
                    None => attr_level[key.attr.index()] = Some(visible),
                    Some(term) => {
                        value_level.insert((key.attr, term), visible);
                    }
                }
            }
        }
        VisibilityView {
            attr_level,
            value_level,
        }
    }

    pub fn to_doc(&self, schema: &Schema) -> MetaDoc {
        let mut transitions: Vec<_> = self
            .transition_cost
            .iter()
            .map(|(&(attr, from, to), &cost)| TransitionDoc {
                attr: schema.name(attr).to_owned(),
                from: schema.term_name(attr, from).to_owned(),
                to: schema.term_name(attr, to).to_owned(),
                cost,
            })
            .collect();
        transitions.sort_by(|a, b| (&a.attr, &a.from, &a.to).cmp(&(&b.attr, &b.from, &b.to)));
        let mut visibility: Vec<_> = self
            .visibility
            .iter()
            .map(|(key, &visible)| VisibilityDoc {
                attr: schema.name(key.attr).to_owned(),
                value: key.value.map(|t| schema.term_name(key.attr, t).to_owned()),
                actor: key.actor.clone().unwrap_or_else(|| ANY_ACTOR.to_owned()),
                visible: if visible { 1.0 } else { 0.0 },
            })
            .collect();
        visibility.sort_by(|a, b| (&a.attr, &a.value, &a.actor).cmp(&(&b.attr, &b.value, &b.actor)));
        MetaDoc {
            costs: schema
                .ids()
                .map(|a| (schema.name(a).to_owned(), self.attribute_cost(a)))
                .collect(),
            transitions,
            visibility,
            bounds: Some(BoundsDoc {
                min: self.cost_min,
                max: self.cost_max,
            }),
        }
    }
}

/// Actor token that applies a visibility entry to everyone.
pub const ANY_ACTOR: &str = "*";

#[derive(Debug, Clone)]
pub struct VisibilityView {
    attr_level: Vec<Option<bool>>,
    value_level: HashMap<(AttrId, Term), bool>,
}

impl VisibilityView {
    #[inline]
    pub fn attribute_visible(&self, attr: AttrId) -> bool {
        self.attr_level[attr.index()].unwrap_or(true)
    }

    #[inline]
    pub fn edge_visible(&self, attr: AttrId, label: Term) -> bool {
        if !self.value_level.is_empty() {
            if let Some(&v) = self.value_level.get(&(attr, label)) {
                return v;
            }
        }
        self.attribute_visible(attr)
    }

    pub fn value_visible(&self, attr: AttrId, value: Option<ValueId>) -> bool {
        self.edge_visible(attr, Term::of(value))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionDoc {
    pub attr: String,
    pub from: String,
    pub to: String,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityDoc {
    pub attr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub actor: String,
    /// Must be exactly 0 or 1.
    pub visible: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsDoc {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetaDoc {
    #[serde(default)]
    pub costs: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transitions: Vec<TransitionDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub visibility: Vec<VisibilityDoc>,
    #[serde(default)]
    pub bounds: Option<BoundsDoc>,
}

impl MetaDoc {
    /// Builds the meta-policy. Attributes without a cost are an error unless
    /// `fill` is given, in which case a default cost is sampled for them.
    pub fn to_meta<R: Rng>(&self, schema: &Schema, mut fill: Option<&mut R>) -> Result<MetaPolicy> {
        let (min, max) = self
            .bounds
            .map_or(DEFAULT_COST_BOUNDS, |b| (b.min, b.max));
        for name in self.costs.keys() {
            if schema.attr(name).is_none() {
                return Err(Error::UnknownAttribute {
                    location: format!("meta.costs.{name}"),
                    attribute: name.clone(),
                });
            }
        }
        let mut costs = Vec::with_capacity(schema.len());
        for attr in schema.attributes() {
            let cost = match (self.costs.get(&attr.name), fill.as_deref_mut()) {
                (Some(&c), _) => c,
                (None, Some(rng)) => default_cost(attr.category, rng)?,
                (None, None) => {
                    return Err(Error::invalid(
                        format!("meta.costs.{}", attr.name),
                        "missing change cost",
                    ))
                }
            };
            costs.push(cost);
        }
        let mut meta = MetaPolicy::new(costs, min, max).map_err(|e| match e {
            Error::CostOutOfBounds { .. } | Error::DegenerateBounds { .. } => {
                Error::invalid("meta.costs", e.to_string())
            }
            other => other,
        })?;
        for (i, t) in self.transitions.iter().enumerate() {
            let location = format!("meta.transitions[{i}]");
            let attr = resolve_attr(schema, &t.attr, &location)?;
            let from = resolve_term(schema, attr, &t.from, &location)?;
            let to = resolve_term(schema, attr, &t.to, &location)?;
            meta.set_transition_cost(attr, from, to, t.cost)
                .map_err(|e| Error::invalid(&location, e.to_string()))?;
        }
        for (i, v) in self.visibility.iter().enumerate() {
            let location = format!("meta.visibility[{i}]");
            let attr = resolve_attr(schema, &v.attr, &location)?;
            let visible = if v.visible == 1.0 {
                true
            } else if v.visible == 0.0 {
                false
            } else {
                return Err(Error::invalid(
                    location,
                    format!("visibility must be 0 or 1, got {}", v.visible),
                ));
            };
            let actor = (v.actor != ANY_ACTOR).then_some(v.actor.as_str());
            match &v.value {
                Some(token) => {
                    let term = resolve_term(schema, attr, token, &location)?;
                    meta.set_value_visibility(attr, term, actor, visible);
                }
                None => meta.set_visibility(attr, actor, visible),
            }
        }
        Ok(meta)
    }
}

fn resolve_attr(schema: &Schema, name: &str, location: &str) -> Result<AttrId> {
    schema.attr(name).ok_or_else(|| Error::UnknownAttribute {
        location: location.to_owned(),
        attribute: name.to_owned(),
    })
}

fn resolve_term(schema: &Schema, attr: AttrId, token: &str, location: &str) -> Result<Term> {
    schema.term(attr, token).ok_or_else(|| Error::ValueOutsideDomain {
        location: location.to_owned(),
        attribute: schema.name(attr).to_owned(),
        value: token.to_owned(),
    })
}
