//! Experiment harness: per-configuration metrics, limit grid search and the
//! visibility sweep, with CSV rendering.

use std::fmt::Write as _;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use web_time::Instant;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::feedback::{search_from, FeedbackResult, SearchLimits, SearchStrategy};
use crate::meta::{MetaPolicy, VisibilityView};
use crate::model::{oracle_allows, AttrId, Request, Term};
use crate::tree::{build_tree, NodeId, PolicyTree, SplitHeuristic};

/// Actor name feedback is computed for in experiments.
pub const BENCH_ACTOR: &str = "requester";

pub const DEFAULT_DEPTH_GRID: [u32; 8] = [3, 5, 10, 20, 30, 50, 75, 100];
pub const DEFAULT_CHANGE_GRID: [u32; 7] = [1, 2, 3, 5, 10, 15, 20];
pub const DEFAULT_SWEEP_FRACTIONS: [f64; 9] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub heuristic: SplitHeuristic,
    pub strategy: SearchStrategy,
    pub max_depth: u32,
    pub max_changes: u32,
    pub n_queries: usize,
    pub n_allowed: usize,
    pub n_denied: usize,
    pub n_found: usize,
    /// Absent when nothing was denied.
    pub found_fraction: Option<f64>,
    /// Averaged over found cases.
    pub avg_cost: Option<f64>,
    /// Averaged over found cases.
    pub avg_depth: Option<f64>,
    /// Averaged over found cases.
    pub avg_changes: Option<f64>,
    /// Feedback time per denied request.
    pub avg_time_ms: Option<f64>,
    /// Per denied request.
    pub nodes_expanded: Option<f64>,
    pub tree_node_count: usize,
    pub tree_height: u32,
    pub tree_build_time_ms: f64,
    /// Average decision time on the tree, microseconds.
    pub avg_tree_decision_us: f64,
    /// Average decision time of the linear rule scan, microseconds.
    pub avg_scan_decision_us: f64,
    /// Queries where the tree and the linear scan disagree; zero for a correct tree.
    pub decision_mismatches: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "heuristic,strategy,max_depth,max_changes,n_queries,n_allowed,n_denied,n_found,found_fraction,avg_cost,avg_depth,avg_changes,avg_time_ms,nodes_expanded,tree_node_count,tree_height,tree_build_time_ms,avg_tree_decision_us,avg_scan_decision_us,decision_mismatches";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3},{:.3},{:.3},{}",
            self.heuristic,
            self.strategy,
            self.max_depth,
            self.max_changes,
            self.n_queries,
            self.n_allowed,
            self.n_denied,
            self.n_found,
            opt(self.found_fraction),
            opt(self.avg_cost),
            opt(self.avg_depth),
            opt(self.avg_changes),
            opt(self.avg_time_ms),
            opt(self.nodes_expanded),
            self.tree_node_count,
            self.tree_height,
            self.tree_build_time_ms,
            self.avg_tree_decision_us,
            self.avg_scan_decision_us,
            self.decision_mismatches,
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} tree ({} nodes, height {}, built in {:.2} ms), {} search, limits depth {} / changes {}",
            self.heuristic,
            self.tree_node_count,
            self.tree_height,
            self.tree_build_time_ms,
            self.strategy,
            self.max_depth,
            self.max_changes
        );
        let _ = writeln!(
            s,
            "queries {}: allowed {}, denied {}, decision mismatches {}",
            self.n_queries, self.n_allowed, self.n_denied, self.decision_mismatches
        );
        let _ = writeln!(
            s,
            "decision time: tree {:.3} us, linear scan {:.3} us",
            self.avg_tree_decision_us, self.avg_scan_decision_us
        );
        let _ = writeln!(
            s,
            "feedback: found {} of {} ({}), avg cost {}, avg depth {}, avg changes {}, avg nodes {}, avg time {} ms",
            self.n_found,
            self.n_denied,
            opt(self.found_fraction),
            opt(self.avg_cost),
            opt(self.avg_depth),
            opt(self.avg_changes),
            opt(self.nodes_expanded),
            opt(self.avg_time_ms),
        );
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.4}"))
}

/// A denied request together with the node its evaluation stopped at.
#[derive(Debug, Clone)]
pub struct DeniedQuery {
    pub index: usize,
    pub request: Request,
    pub deny_node: NodeId,
}

/// Aggregated feedback over a set of denied requests.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FeedbackStats {
    pub n_denied: usize,
    pub n_found: usize,
    pub found_fraction: Option<f64>,
    pub avg_cost: Option<f64>,
    pub avg_depth: Option<f64>,
    pub avg_changes: Option<f64>,
    pub avg_time_ms: Option<f64>,
    pub nodes_expanded: Option<f64>,
}

impl FeedbackStats {
    fn from_results(results: &[FeedbackResult]) -> Self {
        let n = results.len();
        let found: Vec<&FeedbackResult> = results.iter().filter(|r| r.found).collect();
        let mean = |xs: &mut dyn Iterator<Item = f64>, count: usize| (count > 0).then(|| xs.sum::<f64>() / count as f64);
        let cost = |r: &&FeedbackResult| r.change_set.as_ref().map_or(0.0, |c| c.total_cost());
        FeedbackStats {
            n_denied: n,
            n_found: found.len(),
            found_fraction: (n > 0).then(|| found.len() as f64 / n as f64),
            avg_cost: mean(&mut found.iter().map(cost), found.len()),
            avg_depth: mean(&mut found.iter().map(|r| r.solution_depth.unwrap_or(0) as f64), found.len()),
            avg_changes: mean(
                &mut found.iter().map(|r| r.change_set.as_ref().map_or(0, |c| c.len()) as f64),
                found.len(),
            ),
            avg_time_ms: mean(&mut results.iter().map(|r| r.elapsed.as_secs_f64() * 1e3), n),
            nodes_expanded: mean(&mut results.iter().map(|r| r.nodes_expanded as f64), n),
        }
    }
}

/// Runs the search for every query, in parallel when the `parallel` feature
/// is on. Results keep the order of `queries`.
pub fn run_feedback(
    tree: &PolicyTree,
    meta: &MetaPolicy,
    view: &VisibilityView,
    queries: &[DeniedQuery],
    strategy: SearchStrategy,
    limits: SearchLimits,
) -> Vec<FeedbackResult> {
    let one = |q: &DeniedQuery| search_from(tree, meta, view, &q.request, q.deny_node, strategy, limits, None);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        queries.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        queries.iter().map(one).collect()
    }
}

/// The first `n_queries` requests of the pool, cycling when it is shorter.
pub fn query_set(dataset: &Dataset, n_queries: usize) -> Vec<Request> {
    if dataset.requests.is_empty() {
        return Vec::new();
    }
    dataset.requests.iter().cycle().take(n_queries).cloned().collect()
}

/// A tree built for a dataset, with its build time.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub tree: PolicyTree,
    pub build_time: Duration,
}

pub fn prepare(dataset: &Dataset, heuristic: SplitHeuristic, seed: u64) -> Result<Prepared> {
    let started = Instant::now();
    let tree = build_tree(&dataset.policy, heuristic, &dataset.meta, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(Prepared {
        tree,
        build_time: started.elapsed(),
    })
}

/// Denied requests among `queries`, with their deny nodes.
pub fn denied_queries(tree: &PolicyTree, queries: &[Request]) -> Vec<DeniedQuery> {
    queries
        .iter()
        .enumerate()
        .filter_map(|(index, q)| {
            evaluate(tree, q).deny_node.map(|deny_node| DeniedQuery {
                index,
                request: q.clone(),
                deny_node,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecisionTiming {
    pub n_allowed: usize,
    pub mismatches: usize,
    pub avg_tree_us: f64,
    pub avg_scan_us: f64,
}

/// Times every query against the tree and against the linear rule scan.
pub fn time_decisions(tree: &PolicyTree, queries: &[Request]) -> DecisionTiming {
    let policy = tree.policy();
    let mut tree_decisions = Vec::with_capacity(queries.len());
    let started = Instant::now();
    for q in queries {
        tree_decisions.push(crate::eval::allows(tree, q));
    }
    let tree_time = started.elapsed();
    let mut scan_decisions = Vec::with_capacity(queries.len());
    let started = Instant::now();
    for q in queries {
        scan_decisions.push(oracle_allows(policy, q));
    }
    let scan_time = started.elapsed();
    let n = queries.len().max(1) as f64;
    DecisionTiming {
        n_allowed: tree_decisions.iter().filter(|&&a| a).count(),
        mismatches: tree_decisions.iter().zip(&scan_decisions).filter(|(a, b)| a != b).count(),
        avg_tree_us: tree_time.as_secs_f64() * 1e6 / n,
        avg_scan_us: scan_time.as_secs_f64() * 1e6 / n,
    }
}

/// Builds the tree, decides `n_queries` requests from the pool and runs
/// feedback search on every denial.
pub fn run_benchmark(
    dataset: &Dataset,
    heuristic: SplitHeuristic,
    strategy: SearchStrategy,
    limits: SearchLimits,
    n_queries: usize,
    seed: u64,
) -> Result<MetricsReport> {
    if n_queries == 0 {
        return Err(Error::invalid("n_queries", "must be positive"));
    }
    let prepared = prepare(dataset, heuristic, seed)?;
    let tree = &prepared.tree;
    let queries = query_set(dataset, n_queries);
    let timing = time_decisions(tree, &queries);
    let denied = denied_queries(tree, &queries);
    let view = dataset.meta.view(BENCH_ACTOR);
    let stats = FeedbackStats::from_results(&run_feedback(tree, &dataset.meta, &view, &denied, strategy, limits));
    Ok(MetricsReport {
        heuristic,
        strategy,
        max_depth: limits.max_depth,
        max_changes: limits.max_changes,
        n_queries: queries.len(),
        n_allowed: queries.len() - denied.len(),
        n_denied: stats.n_denied,
        n_found: stats.n_found,
        found_fraction: stats.found_fraction,
        avg_cost: stats.avg_cost,
        avg_depth: stats.avg_depth,
        avg_changes: stats.avg_changes,
        avg_time_ms: stats.avg_time_ms,
        nodes_expanded: stats.nodes_expanded,
        tree_node_count: tree.node_count(),
        tree_height: tree.height(),
        tree_build_time_ms: prepared.build_time.as_secs_f64() * 1e3,
        avg_tree_decision_us: timing.avg_tree_us,
        avg_scan_decision_us: timing.avg_scan_us,
        decision_mismatches: timing.mismatches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub max_depth: u32,
    pub max_changes: u32,
    pub stats: FeedbackStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub heuristic: SplitHeuristic,
    pub strategy: SearchStrategy,
    /// Depth-major order: every change limit for the first depth, then the next depth.
    pub cells: Vec<GridCell>,
    /// `(max_depth, max_changes)` of the best cell.
    pub optimum: (u32, u32),
}

impl GridReport {
    pub const CSV_HEADER: &'static str =
        "max_depth,max_changes,avg_cost,avg_time_ms,found_fraction,nodes_expanded,avg_depth,avg_changes";

    pub fn cell(&self, max_depth: u32, max_changes: u32) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.max_depth == max_depth && c.max_changes == max_changes)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for c in &self.cells {
            let st = &c.stats;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                c.max_depth,
                c.max_changes,
                opt(st.avg_cost),
                opt(st.avg_time_ms),
                opt(st.found_fraction),
                opt(st.nodes_expanded),
                opt(st.avg_depth),
                opt(st.avg_changes)
            );
        }
        s
    }
}

/// Runs every `(max_depth, max_changes)` pair over the same denied requests.
///
/// The optimum finds the most requests, then needs fewer changes on
/// average, then costs less; remaining ties keep the earlier cell.
pub fn grid_search(
    dataset: &Dataset,
    heuristic: SplitHeuristic,
    strategy: SearchStrategy,
    depth_grid: &[u32],
    change_grid: &[u32],
    n_queries: usize,
    seed: u64,
) -> Result<GridReport> {
    if depth_grid.is_empty() || change_grid.is_empty() {
        return Err(Error::invalid("grid", "depth and change grids must be non-empty"));
    }
    let prepared = prepare(dataset, heuristic, seed)?;
    let tree = &prepared.tree;
    let denied = denied_queries(tree, &query_set(dataset, n_queries));
    let view = dataset.meta.view(BENCH_ACTOR);
    let mut cells = Vec::with_capacity(depth_grid.len() * change_grid.len());
    for &max_depth in depth_grid {
        for &max_changes in change_grid {
            let limits = SearchLimits::new(max_depth, max_changes);
            let results = run_feedback(tree, &dataset.meta, &view, &denied, strategy, limits);
            cells.push(GridCell {
                max_depth,
                max_changes,
                stats: FeedbackStats::from_results(&results),
            });
        }
    }
    let mut best = &cells[0];
    for c in &cells[1..] {
        if better_cell(&c.stats, &best.stats) {
            best = c;
        }
    }
    Ok(GridReport {
        heuristic,
        strategy,
        optimum: (best.max_depth, best.max_changes),
        cells,
    })
}

fn better_cell(a: &FeedbackStats, b: &FeedbackStats) -> bool {
    if a.n_found != b.n_found {
        return a.n_found > b.n_found;
    }
    let key = |s: &FeedbackStats| (s.avg_changes.unwrap_or(f64::INFINITY), s.avg_cost.unwrap_or(f64::INFINITY));
    let (ca, ka) = key(a);
    let (cb, kb) = key(b);
    ca < cb || (ca == cb && ka < kb)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Fraction of attribute-value pairs hidden.
    pub hidden_fraction: f64,
    pub hidden_pairs: usize,
    pub found_pct: f64,
    /// Average cost over found cases.
    pub avg_score: Option<f64>,
    pub avg_nodes: f64,
    pub avg_time_ms: f64,
}

impl SweepRow {
    pub fn visibility_pct(&self) -> f64 {
        (1.0 - self.hidden_fraction) * 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub heuristic: SplitHeuristic,
    pub strategy: SearchStrategy,
    pub limits: SearchLimits,
    /// Denied requests the unrestricted search explains; every row runs on these.
    pub baseline_requests: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub const CSV_HEADER: &'static str = "visibility_pct,found_pct,avg_score,avg_nodes,avg_time_ms";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.0},{:.2},{},{:.2},{:.4}",
                r.visibility_pct(),
                r.found_pct,
                opt(r.avg_score),
                r.avg_nodes,
                r.avg_time_ms
            );
        }
        s
    }
}

/// Distinct concrete `(attribute, value)` pairs the policy's rules test, in a
/// seed-dependent random order.
pub fn hideable_pairs(dataset: &Dataset, seed: u64) -> Vec<(AttrId, Term)> {
    let mut pairs: Vec<(AttrId, Term)> = dataset
        .policy
        .rules()
        .iter()
        .flat_map(|r| r.constraints().map(|p| (p.attr, p.term)))
        .collect();
    pairs.sort();
    pairs.dedup();
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    pairs
}

/// Hides growing prefixes of one random order of attribute-value pairs, for
/// every actor, and reruns feedback on the requests explainable with full
/// visibility. Larger fractions hide supersets of smaller ones.
pub fn visibility_sweep(
    dataset: &Dataset,
    fractions: &[f64],
    heuristic: SplitHeuristic,
    strategy: SearchStrategy,
    limits: SearchLimits,
    n_queries: usize,
    seed: u64,
) -> Result<SweepReport> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::invalid("fractions", format!("{f} is outside [0, 1]")));
    }
    let prepared = prepare(dataset, heuristic, seed)?;
    let tree = &prepared.tree;
    let denied = denied_queries(tree, &query_set(dataset, n_queries));
    let open = dataset.meta.view(BENCH_ACTOR);
    let baseline = run_feedback(tree, &dataset.meta, &open, &denied, strategy, limits);
    let findable: Vec<DeniedQuery> = denied
        .into_iter()
        .zip(&baseline)
        .filter(|(_, r)| r.found)
        .map(|(q, _)| q)
        .collect();

    let pairs = hideable_pairs(dataset, seed);
    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let hidden = ((fraction * pairs.len() as f64).round() as usize).min(pairs.len());
        let mut meta = dataset.meta.clone();
        for &(attr, term) in &pairs[..hidden] {
            meta.set_value_visibility(attr, term, None, false);
        }
        let view = meta.view(BENCH_ACTOR);
        let stats = FeedbackStats::from_results(&run_feedback(tree, &meta, &view, &findable, strategy, limits));
        rows.push(SweepRow {
            hidden_fraction: fraction,
            hidden_pairs: hidden,
            found_pct: stats.found_fraction.unwrap_or(0.0) * 100.0,
            avg_score: stats.avg_cost,
            avg_nodes: stats.nodes_expanded.unwrap_or(0.0),
            avg_time_ms: stats.avg_time_ms.unwrap_or(0.0),
        });
    }
    Ok(SweepReport {
        heuristic,
        strategy,
        limits,
        baseline_requests: findable.len(),
        rows,
    })
}
