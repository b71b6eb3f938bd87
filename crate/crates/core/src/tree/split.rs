//! Split-attribute scoring and selection.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::meta::MetaPolicy;
use crate::model::{AttrId, Policy, Term};

use super::SplitHeuristic;

/// Shannon entropy in bits of a class histogram. Zero counts are ignored.
pub fn entropy(counts: impl IntoIterator<Item = u64>) -> Result<f64> {
    let mut counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyClassCounts);
    }
    // Summation order fixed so that permuted histograms give identical bits.
    counts.sort_unstable();
    let total = total as f64;
    let h = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Partitions `rules` (indices into the policy) by their term on `attr`.
pub(crate) fn partition(policy: &Policy, rules: &[usize], attr: AttrId) -> HashMap<Term, Vec<usize>> {
    let mut parts: HashMap<Term, Vec<usize>> = HashMap::new();
    for &r in rules {
        parts.entry(policy.rules()[r].term(attr)).or_default().push(r);
    }
    parts
}

fn value_histogram<'a>(policy: &Policy, rules: impl Iterator<Item = &'a usize>, attr: AttrId) -> Vec<u64> {
    let mut counts: HashMap<Term, u64> = HashMap::new();
    for &r in rules {
        *counts.entry(policy.rules()[r].term(attr)).or_default() += 1;
    }
    counts.into_values().collect()
}

/// Information gain of splitting `rules` on `attr`, where the classes are the
/// attribute's predicate values (the wildcard counts as its own value).
pub fn information_gain(policy: &Policy, rules: &[usize], attr: AttrId) -> Result<f64> {
    if rules.is_empty() {
        return Err(Error::EmptyRuleSet);
    }
    let total = rules.len() as f64;
    let before = entropy(value_histogram(policy, rules.iter(), attr))?;
    let mut after = 0.0;
    for part in partition(policy, rules, attr).values() {
        let weight = part.len() as f64 / total;
        after += weight * entropy(value_histogram(policy, part.iter(), attr))?;
    }
    Ok((before - after).max(0.0))
}

/// Picks the attribute to test next. Ties go to the lexicographically
/// smallest attribute name; `rng` is only consulted by `Random`.
pub fn select_split_attribute<R: Rng + ?Sized>(
    policy: &Policy,
    rules: &[usize],
    candidates: &[AttrId],
    heuristic: SplitHeuristic,
    meta: &MetaPolicy,
    rng: &mut R,
) -> Result<AttrId> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let schema = policy.schema();
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| schema.name(*a).cmp(schema.name(*b)));
    sorted.dedup();
    if sorted.len() == 1 {
        return Ok(sorted[0]);
    }

    let score = |attr: AttrId| -> Result<f64> {
        Ok(match heuristic {
            SplitHeuristic::HighestEntropy | SplitHeuristic::LowestEntropy => {
                information_gain(policy, rules, attr)?
            }
            SplitHeuristic::HighCostFirst | SplitHeuristic::LowCostFirst => meta.attribute_cost(attr),
            SplitHeuristic::Random => 0.0,
        })
    };
    let maximise = match heuristic {
        SplitHeuristic::HighestEntropy | SplitHeuristic::HighCostFirst => true,
        SplitHeuristic::LowestEntropy | SplitHeuristic::LowCostFirst => false,
        SplitHeuristic::Random => return Ok(sorted[rng.gen_range(0..sorted.len())]),
    };

    let mut best = sorted[0];
    let mut best_score = score(best)?;
    for &attr in &sorted[1..] {
        let s = score(attr)?;
        let better = if maximise { s > best_score } else { s < best_score };
        if better {
            best = attr;
            best_score = s;
        }
    }
    Ok(best)
}
