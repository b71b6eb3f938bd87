use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abac_explain::bench::{
    grid_search, run_benchmark, visibility_sweep, MetricsReport, DEFAULT_CHANGE_GRID, DEFAULT_DEPTH_GRID,
    DEFAULT_SWEEP_FRACTIONS,
};
use abac_explain::datagen::{generate_dataset, generate_requests, load_dataset, Dataset, DatasetParams};
use abac_explain::document::{value_token, RequestDoc};
use abac_explain::{
    build_tree, evaluate, feedback_search, validate_tree, Decision, Error, FeedbackResult, MetaPolicy, Outcome,
    PolicyTree, Request, SearchLimits, SearchStrategy, SplitHeuristic,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Dataset argument that selects the bundled healthcare toy dataset.
const BUNDLED_HEALTHCARE: &str = "@healthcare";

#[derive(Parser)]
#[command(name = "abac-explain", version, about = "Policy trees and cost-aware feedback for denied ABAC requests")]
struct Cli {
    /// Seed for tree construction and generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset, or a fresh request pool for an existing one.
    Gen(GenArgs),
    /// Build a policy tree and print its dump.
    Build(BuildArgs),
    /// Decide one request.
    Eval(EvalArgs),
    /// Explain a denied request with a minimal change set.
    Explain(ExplainArgs),
    /// Decision and feedback metrics for one configuration.
    Bench(BenchArgs),
    /// Feedback metrics over a grid of search limits.
    Grid(GridArgs),
    /// Feedback under growing fractions of hidden attribute values.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset or policy JSON file; `@healthcare` selects the bundled toy dataset.
    #[arg(long, short = 'd')]
    dataset: String,
    /// Meta-policy JSON file replacing the dataset's costs and visibility.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args)]
struct TreeArgs {
    #[arg(long, default_value = "high_cost_first")]
    heuristic: SplitHeuristic,
    /// Load a tree dump instead of building one.
    #[arg(long)]
    tree: Option<PathBuf>,
}

#[derive(Args)]
struct LimitArgs {
    #[arg(long, default_value_t = 30)]
    max_depth: u32,
    #[arg(long, default_value_t = 4)]
    max_changes: u32,
}

#[derive(Args)]
struct RequestArgs {
    /// Request JSON, inline or as a file path.
    #[arg(long, conflicts_with = "request_index")]
    request: Option<String>,
    /// Take the request at this index of the dataset's pool.
    #[arg(long)]
    request_index: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    /// `synthetic-1` or `synthetic-2`.
    #[arg(long, conflicts_with = "params_file")]
    preset: Option<String>,
    /// Generation parameters as JSON.
    #[arg(long)]
    params_file: Option<PathBuf>,
    /// Keep this dataset's policy and entities and generate only requests.
    #[arg(long, conflicts_with_all = ["preset", "params_file"])]
    base: Option<String>,
    #[arg(long)]
    n_requests: Option<usize>,
    #[arg(long)]
    n_rules: Option<usize>,
    #[arg(long)]
    wildcard_fraction: Option<f64>,
    #[arg(long)]
    allow_ratio: Option<f64>,
    #[arg(long)]
    max_perturbations: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, default_value = "high_cost_first")]
    heuristic: SplitHeuristic,
    /// Also write the tree dump to this file.
    #[arg(long)]
    dump_tree: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    request: RequestArgs,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    tree: TreeArgs,
    #[command(flatten)]
    request: RequestArgs,
    #[arg(long, default_value = "change_best")]
    strategy: SearchStrategy,
    #[command(flatten)]
    limits: LimitArgs,
    /// Whose visibility constraints apply.
    #[arg(long, default_value = "requester")]
    actor: String,
    /// Write the tree the search ran on to this file.
    #[arg(long)]
    dump_tree: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, default_value = "high_cost_first")]
    heuristic: SplitHeuristic,
    #[arg(long, default_value = "change_first")]
    strategy: SearchStrategy,
    #[command(flatten)]
    limits: LimitArgs,
    /// Requests taken from the pool, cycling when it is shorter.
    #[arg(long, default_value_t = 10_000)]
    queries: usize,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, default_value = "high_cost_first")]
    heuristic: SplitHeuristic,
    #[arg(long, default_value = "change_first")]
    strategy: SearchStrategy,
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    changes: Option<Vec<u32>>,
    #[arg(long, default_value_t = 10_000)]
    queries: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, default_value = "high_cost_first")]
    heuristic: SplitHeuristic,
    #[arg(long, default_value = "change_best")]
    strategy: SearchStrategy,
    #[command(flatten)]
    limits: LimitArgs,
    /// Hidden fractions of attribute-value pairs.
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10_000)]
    queries: usize,
}

enum Failure {
    Usage(String),
    Validation(Error),
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        if err.is_validation() {
            Failure::Validation(err)
        } else {
            Failure::Usage(err.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Validation(err)) => {
            eprintln!("invalid input: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> CliResult {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Gen(args) => gen(args, cli.seed),
        Command::Build(args) => build(args, seed, cli.format.unwrap_or(Format::Json)),
        Command::Eval(args) => eval(args, seed, cli.format.unwrap_or(Format::Json)),
        Command::Explain(args) => explain(args, seed, cli.format.unwrap_or(Format::Text)),
        Command::Bench(args) => bench(args, seed, cli.format.unwrap_or(Format::Csv)),
        Command::Grid(args) => grid(args, seed, cli.format.unwrap_or(Format::Csv)),
        Command::Sweep(args) => sweep(args, seed, cli.format.unwrap_or(Format::Csv)),
    }
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load(args: &DatasetArgs) -> CliResult<Dataset> {
    let mut dataset = if args.dataset == BUNDLED_HEALTHCARE {
        Dataset::healthcare()
    } else {
        let path = Path::new(&args.dataset);
        if !path.exists() {
            return Err(Failure::Usage(format!("no such dataset file: {}", path.display())));
        }
        load_dataset(path)?
    };
    if let Some(path) = &args.meta {
        dataset.meta = MetaPolicy::parse(dataset.policy.schema(), &read(path)?)?;
    }
    Ok(dataset)
}

fn tree_for(dataset: &Dataset, args: &TreeArgs, seed: u64) -> CliResult<PolicyTree> {
    match &args.tree {
        Some(path) => Ok(PolicyTree::parse(&dataset.policy, &read(path)?)?),
        None => Ok(build_tree(&dataset.policy, args.heuristic, &dataset.meta, &mut ChaCha8Rng::seed_from_u64(seed))?),
    }
}

fn request_for(dataset: &Dataset, args: &RequestArgs) -> CliResult<Request> {
    match (&args.request, args.request_index) {
        (Some(text), _) => {
            let text = if text.trim_start().starts_with('{') { text.clone() } else { read(Path::new(text))? };
            let doc: RequestDoc = serde_json::from_str(&text).map_err(Error::from)?;
            Ok(doc.to_request(&dataset.policy, "request")?)
        }
        (None, Some(i)) => dataset.requests.get(i).cloned().ok_or_else(|| {
            Failure::Usage(format!("request index {i} is out of range; the pool has {} requests", dataset.requests.len()))
        }),
        (None, None) => Err(Failure::Usage("one of --request or --request-index is required".into())),
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn pretty(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

fn gen(args: &GenArgs, seed: Option<u64>) -> CliResult {
    if let Some(base) = &args.base {
        let mut dataset = load(&DatasetArgs { dataset: base.clone(), meta: None })?;
        let n = args.n_requests.unwrap_or(dataset.requests.len().max(1));
        let ratio = args.allow_ratio.unwrap_or(0.7);
        let mp = args.max_perturbations.unwrap_or(3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
        dataset.requests = generate_requests(&dataset, n, ratio, mp, &mut rng)?;
        return emit(args.out.as_deref(), &dataset.to_json());
    }
    let mut params = match (&args.preset, &args.params_file) {
        (Some(name), _) => DatasetParams::preset(name)
            .ok_or_else(|| Failure::Usage(format!("unknown preset `{name}`; use synthetic-1 or synthetic-2")))?,
        (None, Some(path)) => serde_json::from_str(&read(path)?).map_err(Error::from)?,
        (None, None) => return Err(Failure::Usage("one of --preset, --params-file or --base is required".into())),
    };
    if let Some(s) = seed {
        params.seed = s;
    }
    if let Some(n) = args.n_requests {
        params.n_requests = n;
    }
    if let Some(n) = args.n_rules {
        params.n_p = n;
    }
    if let Some(w) = args.wildcard_fraction {
        params.wildcard_fraction = w;
    }
    if let Some(r) = args.allow_ratio {
        params.target_allow_ratio = r;
    }
    if let Some(m) = args.max_perturbations {
        params.max_perturbations = m;
    }
    let dataset = generate_dataset(&params, &mut ChaCha8Rng::seed_from_u64(params.seed))?;
    emit(args.out.as_deref(), &dataset.to_json())
}

fn build(args: &BuildArgs, seed: u64, format: Format) -> CliResult {
    let dataset = load(&args.data)?;
    let started = std::time::Instant::now();
    let tree = build_tree(&dataset.policy, args.heuristic, &dataset.meta, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let build_ms = started.elapsed().as_secs_f64() * 1e3;
    let report = validate_tree(&tree, &dataset.policy);
    if let Some(v) = report.violations.first() {
        return Err(Failure::Validation(Error::Invalid { location: "tree".into(), message: v.to_string() }));
    }
    if let Some(path) = &args.dump_tree {
        emit(Some(path), &tree.to_json())?;
    }
    match format {
        Format::Json => emit(None, &tree.to_json()),
        Format::Csv => emit(
            None,
            &format!(
                "heuristic,node_count,leaf_count,height,max_branching,build_time_ms\n{},{},{},{},{},{:.3}\n",
                tree.heuristic(),
                tree.node_count(),
                tree.leaf_count(),
                tree.height(),
                tree.max_branching_factor(),
                build_ms
            ),
        ),
        Format::Text => emit(
            None,
            &format!(
                "{} tree over {} rules: {} nodes, {} leaves, height {}, max branching {}, built in {:.2} ms\n",
                tree.heuristic(),
                dataset.policy.rules().len(),
                tree.node_count(),
                tree.leaf_count(),
                tree.height(),
                tree.max_branching_factor(),
                build_ms
            ),
        ),
    }
}

fn decision_name(d: &Decision) -> &'static str {
    match d.outcome {
        Outcome::Allow => "allow",
        Outcome::Deny => "deny",
    }
}

fn eval(args: &EvalArgs, seed: u64, format: Format) -> CliResult {
    let dataset = load(&args.data)?;
    let tree = tree_for(&dataset, &args.tree, seed)?;
    let request = request_for(&dataset, &args.request)?;
    let out = evaluate(&tree, &request);
    let ids = |v: &[abac_explain::NodeId]| v.iter().map(|n| n.0).collect::<Vec<_>>();
    let text = match format {
        Format::Json => pretty(&json!({
            "decision": decision_name(&out.decision),
            "granted_operations": out.decision.granted_operations,
            "matched_rule_ids": out.decision.matched_rule_ids,
            "visited_path": ids(&out.visited_path),
            "deny_node": out.deny_node.map(|n| n.0),
            "allow_leaf": out.allow_leaf.map(|n| n.0),
            "retrace_count": out.retrace_count,
        })),
        Format::Csv => format!(
            "decision,deny_node,allow_leaf,retrace_count,visited\n{},{},{},{},{}\n",
            decision_name(&out.decision),
            out.deny_node.map_or(String::new(), |n| n.0.to_string()),
            out.allow_leaf.map_or(String::new(), |n| n.0.to_string()),
            out.retrace_count,
            ids(&out.visited_path).iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
        ),
        Format::Text => match (out.allow_leaf, out.deny_node) {
            (Some(leaf), _) => format!("allow (leaf n{}, {} retraces)\n", leaf.0, out.retrace_count),
            (_, Some(node)) => format!("deny (stopped at n{}, {} retraces)\n", node.0, out.retrace_count),
            _ => format!("{}\n", decision_name(&out.decision)),
        },
    };
    emit(None, &text)
}

fn explain(args: &ExplainArgs, seed: u64, format: Format) -> CliResult {
    let dataset = load(&args.data)?;
    let tree = tree_for(&dataset, &args.tree, seed)?;
    if let Some(path) = &args.dump_tree {
        emit(Some(path), &tree.to_json())?;
    }
    let request = request_for(&dataset, &args.request)?;
    let limits = SearchLimits::new(args.limits.max_depth, args.limits.max_changes);
    let result = feedback_search(&tree, &dataset.meta, &request, &args.actor, args.strategy, limits)?;
    emit(None, &render_feedback(&dataset, &request, &result, format))
}

fn render_feedback(dataset: &Dataset, request: &Request, result: &FeedbackResult, format: Format) -> String {
    let schema = dataset.policy.schema();
    let changes: Vec<(String, String, f64)> = result
        .change_set
        .iter()
        .flat_map(|cs| cs.changes().iter())
        .map(|c| (schema.name(c.attr).to_owned(), schema.term_name(c.attr, c.to).to_owned(), c.cost))
        .collect();
    let total = result.change_set.as_ref().map(|cs| cs.total_cost());
    match format {
        Format::Json => pretty(&json!({
            "found": result.found,
            "changes": changes.iter().map(|(a, t, c)| json!({"attr": a, "to": t, "cost": c})).collect::<Vec<_>>(),
            "total_cost": total,
            "nodes_expanded": result.nodes_expanded,
            "depth": result.solution_depth,
        })),
        Format::Csv => {
            let mut s = String::from("attr,from,to,cost\n");
            for c in result.change_set.iter().flat_map(|cs| cs.changes().iter()) {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    schema.name(c.attr),
                    value_token(&dataset.policy, c.attr, request),
                    schema.term_name(c.attr, c.to),
                    c.cost
                );
            }
            s
        }
        Format::Text => {
            if !result.found {
                return format!("no feedback within the limits ({} nodes expanded)\n", result.nodes_expanded);
            }
            let mut s = String::new();
            for (attr, to, cost) in &changes {
                let _ = writeln!(s, "set {attr} = {to} (cost {cost})");
            }
            let _ = writeln!(s, "total cost {}", total.unwrap_or(0.0));
            s
        }
    }
}

fn bench(args: &BenchArgs, seed: u64, format: Format) -> CliResult {
    let dataset = load(&args.data)?;
    let limits = SearchLimits::new(args.limits.max_depth, args.limits.max_changes);
    let report = run_benchmark(&dataset, args.heuristic, args.strategy, limits, args.queries, seed)?;
    let text = match format {
        Format::Json => pretty(&report),
        Format::Csv => format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row()),
        Format::Text => report.to_text(),
    };
    emit(None, &text)
}

fn grid(args: &GridArgs, seed: u64, format: Format) -> CliResult {
    let dataset = load(&args.data)?;
    let depths = args.depths.clone().unwrap_or_else(|| DEFAULT_DEPTH_GRID.to_vec());
    let changes = args.changes.clone().unwrap_or_else(|| DEFAULT_CHANGE_GRID.to_vec());
    let report = grid_search(&dataset, args.heuristic, args.strategy, &depths, &changes, args.queries, seed)?;
    let (d, c) = report.optimum;
    let text = match format {
        Format::Json => pretty(&report),
        Format::Csv => {
            eprintln!("optimum: max_depth {d}, max_changes {c}");
            report.to_csv()
        }
        Format::Text => {
            let mut s = report.to_csv();
            let _ = writeln!(s, "optimum: max_depth {d}, max_changes {c}");
            s
        }
    };
    emit(None, &text)
}

fn sweep(args: &SweepArgs, seed: u64, format: Format) -> CliResult {
    let dataset = load(&args.data)?;
    let limits = SearchLimits::new(args.limits.max_depth, args.limits.max_changes);
    let fractions = args.fractions.clone().unwrap_or_else(|| DEFAULT_SWEEP_FRACTIONS.to_vec());
    let report = visibility_sweep(&dataset, &fractions, args.heuristic, args.strategy, limits, args.queries, seed)?;
    let text = match format {
        Format::Json => pretty(&report),
        Format::Csv => report.to_csv(),
        Format::Text => {
            let mut s = format!(
                "{} tree, {} search, {} baseline-explainable denials\n{}",
                report.heuristic,
                report.strategy,
                report.baseline_requests,
                report.to_csv()
            );
            if !s.ends_with('\n') {
                s.push('\n');
            }
            s
        }
    };
    emit(None, &text)
}
