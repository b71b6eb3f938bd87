//! Exhaustive minimum-cost feedback by enumerating change sets directly
//! against the rule list. Independent of the tree; used to check the search.

use crate::error::{Error, Result};
use crate::meta::MetaPolicy;
use crate::model::{oracle_allows, AttrId, Policy, Request, Term};

use super::{Change, ChangeSet};

/// Largest number of change sets the oracle agrees to enumerate.
pub const ENUMERATION_GUARD: u128 = 1_000_000;

/// Cheapest set of at most `max_changes` visible modifications that makes
/// the linear-scan decision allow `request`. Ties go to fewer changes, then
/// to the lexicographically smaller `(attribute, value)` list.
pub fn oracle_min_feedback(
    policy: &Policy,
    meta: &MetaPolicy,
    request: &Request,
    actor: &str,
    max_changes: u32,
) -> Result<Option<(ChangeSet, f64)>> {
    if oracle_allows(policy, request) {
        return Ok(Some((ChangeSet::default(), 0.0)));
    }
    let schema = policy.schema();
    let view = meta.view(actor);
    let options: Vec<(AttrId, Vec<Term>)> = schema
        .ids()
        .map(|a| {
            let current = Term::of(request.value(a));
            let targets = schema
                .get(a)
                .domain_ids()
                .map(Term::Value)
                .chain([Term::Undefined])
                .filter(|&t| t != current && view.edge_visible(a, t))
                .collect();
            (a, targets)
        })
        .filter(|(_, t): &(AttrId, Vec<Term>)| !t.is_empty())
        .collect();

    let k = (max_changes as usize).min(options.len());
    // Elementary symmetric sums of the per-attribute branching factors.
    let mut per_size = vec![0u128; k + 1];
    per_size[0] = 1;
    for (_, t) in &options {
        for j in (1..=k).rev() {
            per_size[j] = per_size[j].saturating_add(per_size[j - 1].saturating_mul(t.len() as u128));
        }
    }
    let states = per_size.iter().fold(0u128, |s, &x| s.saturating_add(x));
    if states > ENUMERATION_GUARD {
        return Err(Error::EnumerationGuard {
            states,
            guard: ENUMERATION_GUARD,
        });
    }

    let mut search = Search {
        policy,
        meta,
        options: &options,
        budget: k,
        work: request.clone(),
        chosen: Vec::new(),
        best: None,
    };
    search.go(0, 0.0);
    Ok(search.best.map(|(changes, cost)| (ChangeSet::new(changes), cost)))
}

struct Search<'a> {
    policy: &'a Policy,
    meta: &'a MetaPolicy,
    options: &'a [(AttrId, Vec<Term>)],
    budget: usize,
    work: Request,
    chosen: Vec<Change>,
    best: Option<(Vec<Change>, f64)>,
}

impl Search<'_> {
    fn go(&mut self, i: usize, cost: f64) {
        if let Some((_, best)) = &self.best {
            if cost > *best {
                return;
            }
        }
        if !self.chosen.is_empty() && oracle_allows(self.policy, &self.work) {
            self.offer(cost);
        }
        if i == self.options.len() || self.chosen.len() == self.budget {
            return;
        }
        // Choices are made in attribute order, so `chosen` stays sorted.
        for j in i..self.options.len() {
            let (attr, ref targets) = self.options[j];
            let from = self.work.value(attr);
            for &to in targets {
                let c = self.meta.change_cost(attr, Term::of(from), to);
                self.work.set(attr, match to {
                    Term::Value(v) => Some(v),
                    _ => None,
                });
                self.chosen.push(Change { attr, from, to, cost: c });
                self.go(j + 1, cost + c);
                self.chosen.pop();
            }
            self.work.set(attr, from);
        }
    }

    fn offer(&mut self, cost: f64) {
        let better = match &self.best {
            None => true,
            Some((changes, best)) => {
                cost < *best
                    || (cost == *best
                        && (self.chosen.len(), key(&self.chosen)) < (changes.len(), key(changes)))
            }
        };
        if better {
            self.best = Some((self.chosen.clone(), cost));
        }
    }
}

fn key(changes: &[Change]) -> Vec<(AttrId, Term)> {
    changes.iter().map(|c| (c.attr, c.to)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    #[test]
    fn worked_example_minimum_is_clearance_low() {
        let policy = samples::worked_example_policy();
        let meta = samples::example_meta(&policy);
        let q = samples::worked_example_request(&policy);
        let (cs, cost) = oracle_min_feedback(&policy, &meta, &q, "u", 2).unwrap().unwrap();
        assert_eq!(cost, 70.0);
        assert_eq!(cs.named(policy.schema()), [("clearance".to_owned(), "low".to_owned())]);
        // Role alone is the runner-up at 80.
        let mut no_clearance = meta.clone();
        no_clearance.set_visibility(policy.schema().attr("clearance").unwrap(), None, false);
        let (cs, cost) = oracle_min_feedback(&policy, &no_clearance, &q, "u", 2).unwrap().unwrap();
        assert_eq!(cost, 80.0);
        assert_eq!(cs.named(policy.schema()), [("role".to_owned(), "admin".to_owned())]);
    }

    #[test]
    fn allowed_request_needs_nothing() {
        let policy = samples::worked_example_policy();
        let meta = samples::example_meta(&policy);
        let q = policy.request(&[("role", "admin")], "access").unwrap();
        let (cs, cost) = oracle_min_feedback(&policy, &meta, &q, "u", 2).unwrap().unwrap();
        assert!(cs.is_empty());
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn everything_hidden_gives_none() {
        let policy = samples::worked_example_policy();
        let mut meta = samples::example_meta(&policy);
        for a in policy.schema().ids() {
            meta.set_visibility(a, None, false);
        }
        let q = samples::worked_example_request(&policy);
        assert_eq!(oracle_min_feedback(&policy, &meta, &q, "u", 4).unwrap(), None);
    }

    #[test]
    fn zero_budget_gives_none_for_denied_request() {
        let policy = samples::worked_example_policy();
        let meta = samples::example_meta(&policy);
        let q = samples::worked_example_request(&policy);
        assert_eq!(oracle_min_feedback(&policy, &meta, &q, "u", 0).unwrap(), None);
    }

    #[test]
    fn guard_trips_on_large_spaces() {
        let attrs: Vec<String> = (0..12)
            .map(|i| format!(r#"{{"name":"a{i}","category":"user","domain":["v0","v1","v2","v3","v4","v5","v6","v7"]}}"#))
            .collect();
        let text = format!(r#"{{"schema":[{}],"operations":["op"],"rules":[{{"id":1,"predicates":{{"a0":"v0"}},"op":"op"}}]}}"#, attrs.join(","));
        let policy = crate::document::parse_policy(&text).unwrap();
        let meta = MetaPolicy::uniform(policy.schema(), 1.0);
        let q = policy.request(&[("a0", "v1")], "op").unwrap();
        let err = oracle_min_feedback(&policy, &meta, &q, "u", 12).unwrap_err();
        assert!(matches!(err, Error::EnumerationGuard { .. }));
    }
}
