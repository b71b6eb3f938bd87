//! Browser bindings. Every export takes and returns JSON strings so the page
//! needs no generated type glue beyond the wasm-bindgen shim.

use std::sync::Arc;

use abac_explain::bench::{visibility_sweep, SweepReport};
use abac_explain::datagen::{parse_dataset, Dataset, Entities};
use abac_explain::document::{parse_policy, value_token, RequestDoc};
use abac_explain::{
    build_tree, evaluate, locate_deny_node, samples, search_from, Error, MetaPolicy, NodeId, PolicyTree, Request,
    SearchLimits, SearchStrategy, SplitHeuristic, Term,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Actor the demo computes feedback for. Hidden pairs apply to every actor.
const DEMO_ACTOR: &str = "visitor";

/// Requests of the pool sent to the page.
const POOL_PREVIEW: usize = 200;

#[derive(Debug, Deserialize)]
pub struct HiddenPair {
    pub attr: String,
    /// Whole attribute when absent.
    #[serde(default)]
    pub value: Option<String>,
}

#[derive(Debug, Serialize)]
struct ChangeView {
    attr: String,
    from: String,
    to: String,
    cost: f64,
}

fn text(err: Error) -> String {
    err.to_string()
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, input: &str) -> Result<T, String> {
    serde_json::from_str(input).map_err(|e| format!("{what}: {}", text(e.into())))
}

fn dataset_with(policy_json: &str) -> Dataset {
    let policy = parse_policy(policy_json).expect("bundled policy is valid");
    let meta = samples::example_meta(&policy);
    Dataset {
        policy: Arc::new(policy),
        meta,
        entities: Entities::default(),
        requests: Vec::new(),
    }
}

/// Bundled datasets with a suggested request and hidden pairs for each.
pub fn sample_datasets() -> String {
    let mut worked = dataset_with(samples::WORKED_EXAMPLE_JSON);
    worked.requests = vec![
        samples::worked_example_request(&worked.policy),
        samples::intern_request(&worked.policy),
    ];
    let mut visibility = dataset_with(samples::VISIBILITY_EXAMPLE_JSON);
    visibility.requests = vec![samples::visibility_example_request(&visibility.policy)];
    let healthcare = Dataset::healthcare();
    let first_denied = healthcare
        .requests
        .iter()
        .position(|r| !abac_explain::oracle_allows(&healthcare.policy, r))
        .unwrap_or(0);
    let entry = |name: &str, d: &Dataset, request: usize, hidden: Vec<Value>, limits: (u32, u32)| {
        json!({
            "name": name,
            "dataset": serde_json::from_str::<Value>(&d.to_json()).expect("dataset json"),
            "request": RequestDoc::from_request(&d.policy, &d.requests[request]),
            "hidden": hidden,
            "max_depth": limits.0,
            "max_changes": limits.1,
        })
    };
    let hidden: Vec<Value> = samples::VISIBILITY_EXAMPLE_HIDDEN
        .iter()
        .map(|(a, v)| json!({ "attr": a, "value": v }))
        .collect();
    json!([
        entry("worked example", &worked, 0, Vec::new(), (3, 2)),
        entry("hidden values", &visibility, 0, hidden, (6, 2)),
        entry("healthcare", &healthcare, first_denied, Vec::new(), (5, 3)),
    ])
    .to_string()
}

fn load(dataset_json: &str) -> Result<Dataset, String> {
    parse_dataset(dataset_json).map_err(text)
}

fn tree(dataset: &Dataset, heuristic: &str, seed: u64) -> Result<PolicyTree, String> {
    let heuristic: SplitHeuristic = heuristic.parse()?;
    build_tree(&dataset.policy, heuristic, &dataset.meta, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(text)
}

fn hide(dataset: &Dataset, hidden_json: &str) -> Result<MetaPolicy, String> {
    let pairs: Vec<HiddenPair> = if hidden_json.trim().is_empty() { Vec::new() } else { parse("hidden", hidden_json)? };
    let schema = dataset.policy.schema();
    let mut meta = dataset.meta.clone();
    for (i, p) in pairs.iter().enumerate() {
        let attr = schema.attr(&p.attr).ok_or_else(|| format!("hidden[{i}]: unknown attribute `{}`", p.attr))?;
        match &p.value {
            None => meta.set_visibility(attr, None, false),
            Some(v) => {
                let term = schema
                    .term(attr, v)
                    .filter(|t| *t != Term::Any)
                    .ok_or_else(|| format!("hidden[{i}]: `{v}` is not a value of `{}`", p.attr))?;
                meta.set_value_visibility(attr, term, None, false);
            }
        }
    }
    Ok(meta)
}

fn ids(nodes: &[NodeId]) -> Vec<u32> {
    nodes.iter().map(|n| n.0).collect()
}

/// The tree dump plus shape statistics, the schema and a preview of the request pool.
pub fn build_json(dataset_json: &str, heuristic: &str, seed: u64) -> Result<String, String> {
    let dataset = load(dataset_json)?;
    let tree = tree(&dataset, heuristic, seed)?;
    let schema = dataset.policy.schema();
    let attributes: Vec<Value> = schema
        .ids()
        .map(|a| {
            json!({
                "name": schema.name(a),
                "cost": dataset.meta.attribute_cost(a),
                "domain": schema.get(a).domain,
            })
        })
        .collect();
    let pool: Vec<RequestDoc> = dataset
        .requests
        .iter()
        .take(POOL_PREVIEW)
        .map(|r| RequestDoc::from_request(&dataset.policy, r))
        .collect();
    Ok(json!({
        "tree": tree.to_doc(),
        "rules": dataset.policy.rules().len(),
        "leaves": tree.leaf_count(),
        "height": tree.height(),
        "max_branching": tree.max_branching_factor(),
        "attributes": attributes,
        "operations": dataset.policy.operations(),
        "pool": pool,
    })
    .to_string())
}

/// Decision, deny node, and the feedback search with its expansion order.
#[allow(clippy::too_many_arguments)]
pub fn explain_json(
    dataset_json: &str,
    heuristic: &str,
    seed: u64,
    request_json: &str,
    strategy: &str,
    max_depth: u32,
    max_changes: u32,
    hidden_json: &str,
) -> Result<String, String> {
    let dataset = load(dataset_json)?;
    let tree = tree(&dataset, heuristic, seed)?;
    let strategy: SearchStrategy = strategy.parse()?;
    let doc: RequestDoc = parse("request", request_json)?;
    let request: Request = doc.to_request(&dataset.policy, "request").map_err(text)?;
    let meta = hide(&dataset, hidden_json)?;
    let outcome = evaluate(&tree, &request);
    let mut reply = json!({
        "decision": outcome.decision.outcome,
        "visited_path": ids(&outcome.visited_path),
        "allow_leaf": outcome.allow_leaf.map(|n| n.0),
        "deny_node": outcome.deny_node.map(|n| n.0),
        "retrace_count": outcome.retrace_count,
    });
    if outcome.allow_leaf.is_some() {
        return Ok(reply.to_string());
    }
    let deny = locate_deny_node(&tree, &request).map_err(text)?;
    let mut expanded = Vec::new();
    let view = meta.view(DEMO_ACTOR);
    let limits = SearchLimits::new(max_depth, max_changes);
    let result = search_from(&tree, &meta, &view, &request, deny, strategy, limits, Some(&mut expanded));
    let schema = dataset.policy.schema();
    let changes: Vec<ChangeView> = result
        .change_set
        .iter()
        .flat_map(|cs| cs.changes().iter())
        .map(|c| ChangeView {
            attr: schema.name(c.attr).to_owned(),
            from: value_token(&dataset.policy, c.attr, &request),
            to: schema.term_name(c.attr, c.to).to_owned(),
            cost: c.cost,
        })
        .collect();
    let fields = reply.as_object_mut().expect("object");
    fields.insert("found".into(), json!(result.found));
    fields.insert("changes".into(), json!(changes));
    fields.insert("total_cost".into(), json!(result.change_set.as_ref().map(|c| c.total_cost())));
    fields.insert("nodes_expanded".into(), json!(result.nodes_expanded));
    fields.insert("depth".into(), json!(result.solution_depth));
    fields.insert("path".into(), json!(ids(&result.path)));
    fields.insert("expanded".into(), json!(ids(&expanded)));
    fields.insert("elapsed_ms".into(), json!(result.elapsed.as_secs_f64() * 1e3));
    Ok(reply.to_string())
}

/// Visibility sweep over the dataset's request pool.
#[allow(clippy::too_many_arguments)]
pub fn sweep_json(
    dataset_json: &str,
    heuristic: &str,
    strategy: &str,
    max_depth: u32,
    max_changes: u32,
    fractions: &[f64],
    n_queries: usize,
    seed: u64,
) -> Result<String, String> {
    let dataset = load(dataset_json)?;
    if dataset.requests.is_empty() {
        return Err("the dataset has no request pool to sweep over".into());
    }
    let heuristic: SplitHeuristic = heuristic.parse()?;
    let strategy: SearchStrategy = strategy.parse()?;
    let limits = SearchLimits::new(max_depth, max_changes);
    let report: SweepReport =
        visibility_sweep(&dataset, fractions, heuristic, strategy, limits, n_queries, seed).map_err(text)?;
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "visibility_pct": r.visibility_pct(),
                "hidden_pairs": r.hidden_pairs,
                "found_pct": r.found_pct,
                "avg_score": r.avg_score,
                "avg_nodes": r.avg_nodes,
                "avg_time_ms": r.avg_time_ms,
            })
        })
        .collect();
    Ok(json!({ "baseline_requests": report.baseline_requests, "rows": rows }).to_string())
}

fn js(result: Result<String, String>) -> Result<String, JsError> {
    result.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sampleDatasets)]
pub fn sample_datasets_js() -> String {
    sample_datasets()
}

#[wasm_bindgen(js_name = buildTree)]
pub fn build_tree_js(dataset_json: &str, heuristic: &str, seed: u32) -> Result<String, JsError> {
    js(build_json(dataset_json, heuristic, seed as u64))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn explain(
    dataset_json: &str,
    heuristic: &str,
    seed: u32,
    request_json: &str,
    strategy: &str,
    max_depth: u32,
    max_changes: u32,
    hidden_json: &str,
) -> Result<String, JsError> {
    js(explain_json(
        dataset_json,
        heuristic,
        seed as u64,
        request_json,
        strategy,
        max_depth,
        max_changes,
        hidden_json,
    ))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    dataset_json: &str,
    heuristic: &str,
    strategy: &str,
    max_depth: u32,
    max_changes: u32,
    fractions: Vec<f64>,
    n_queries: u32,
    seed: u32,
) -> Result<String, JsError> {
    js(sweep_json(
        dataset_json,
        heuristic,
        strategy,
        max_depth,
        max_changes,
        &fractions,
        n_queries as usize,
        seed as u64,
    ))
}
