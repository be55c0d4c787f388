//! `qnet`: reduce, route, simulate and grid reports as canonical JSON.
//!
//! Exit codes: 0 success, 1 invalid input, 2 no feasible route,
//! 3 search bound exceeded. Failures print `{code, message, context}` on
//! standard output and the message on standard error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use qnet_core::algebra::{grid_cost, GridSpec, GridStrategy};
use qnet_core::graph::{graph_to_value, GraphError};
use qnet_core::json::to_canonical_string;
use qnet_core::montecarlo::{estimate, McError};
use qnet_core::reduction::ReductionError;
use qnet_core::routing::{RouteError, SearchKind, DEFAULT_MAX_BRUTEFORCE_EDGES};
use qnet_core::{
    evaluate_strategy, parse_graph, reduce_to_fixpoint, route, Fidelity, NetworkGraph, NodeRole, OperationCosts,
    RouteRequest, StrategyTree, SuccessProb,
};

#[derive(Parser)]
#[command(
    name = "qnet",
    version,
    about = "Entanglement routing over dephasing, lossy networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply series and parallel rewrites until none is left.
    Reduce {
        graph: PathBuf,
        /// Include every rewrite step in the report.
        #[arg(long)]
        trace: bool,
    },
    /// Find the highest-fidelity strategy between two endpoints.
    Route {
        graph: PathBuf,
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
        #[arg(long)]
        min_success: f64,
        #[arg(long)]
        max_paths: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_MAX_BRUTEFORCE_EDGES)]
        max_bruteforce_edges: usize,
    },
    /// Monte-Carlo estimate of a strategy's cost vector.
    ///
    /// Without `--strategy` the strategy is routed between `--source` and
    /// `--target`, which default to the graph's two endpoints.
    Simulate {
        graph: PathBuf,
        /// Strategy tree document.
        #[arg(long)]
        strategy: Option<PathBuf>,
        #[arg(long, conflicts_with = "strategy")]
        source: Option<String>,
        #[arg(long, conflicts_with = "strategy")]
        target: Option<String>,
        #[arg(long, conflicts_with = "strategy")]
        min_success: Option<f64>,
        #[arg(long)]
        samples: u64,
        #[arg(long)]
        seed: u64,
    },
    /// Closed-form cost of a uniform breadth × depth lattice.
    Grid {
        #[arg(long)]
        breadth: u32,
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        fidelity: f64,
        #[arg(long)]
        success: f64,
        #[arg(long, value_enum)]
        strategy: GridOrder,
        #[arg(long)]
        swap_success: Option<f64>,
        #[arg(long)]
        purify_success: Option<f64>,
        #[arg(long)]
        physical_acceptance: Option<bool>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GridOrder {
    PurifyThenSwap,
    SwapThenPurify,
}

struct Failure {
    exit: u8,
    code: &'static str,
    message: String,
    context: Value,
}

impl Failure {
    fn invalid(code: &'static str, message: impl ToString, context: Value) -> Self {
        Failure {
            exit: 1,
            code,
            message: message.to_string(),
            context,
        }
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Failure::invalid("invalid_graph", &e, json!({ "token": e.token() }))
    }
}

impl From<ReductionError> for Failure {
    fn from(e: ReductionError) -> Self {
        match e {
            ReductionError::Graph(g) => g.into(),
            e => Failure::invalid("invalid_strategy", e, Value::Null),
        }
    }
}

impl From<RouteError> for Failure {
    fn from(e: RouteError) -> Self {
        match e {
            RouteError::Graph(g) => g.into(),
            RouteError::Reduction(r) => r.into(),
            RouteError::InvalidRequest(_) => Failure::invalid("invalid_request", e, Value::Null),
            RouteError::TooLarge { edges, limit } => Failure {
                exit: 3,
                code: "bound_exceeded",
                message: e.to_string(),
                context: json!({ "edges": edges, "limit": limit }),
            },
        }
    }
}

impl From<McError> for Failure {
    fn from(e: McError) -> Self {
        match e {
            McError::Graph(g) => g.into(),
            e => Failure::invalid("invalid_request", e, Value::Null),
        }
    }
}

fn emit(v: &Value) {
    println!("{}", to_canonical_string(v).expect("reports serialize"));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return fail(Failure::invalid(
                "invalid_arguments",
                e.kind(),
                json!({ "detail": e.to_string() }),
            ));
        }
    };
    match configure_threads().and_then(|()| run(cli.command)) {
        Ok(report) => {
            emit(&report);
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("qnet: {}", f.message);
            fail(f)
        }
    }
}

fn fail(f: Failure) -> ExitCode {
    emit(&json!({ "code": f.code, "message": f.message, "context": f.context }));
    ExitCode::from(f.exit)
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("QNET_THREADS") else {
        return Ok(());
    };
    let threads = raw.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::invalid(
            "invalid_environment",
            "QNET_THREADS must be a positive integer",
            json!({ "value": raw }),
        )
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::invalid("invalid_environment", e, Value::Null))
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::invalid("io", format!("{}: {e}", path.display()), json!({ "path": path })))
}

fn load_graph(path: &Path) -> Result<NetworkGraph, Failure> {
    parse_graph(&read(path)?).map_err(|e| {
        let mut f = Failure::from(e);
        f.context["path"] = json!(path);
        f
    })
}

fn probability(name: &'static str, v: f64) -> Result<SuccessProb, Failure> {
    SuccessProb::new(v)
        .map_err(|e| Failure::invalid("invalid_arguments", format!("--{name}: {e}"), json!({ "value": v })))
}

fn run(command: Command) -> Result<Value, Failure> {
    match command {
        Command::Reduce { graph, trace } => {
            let g = load_graph(&graph)?;
            let reduced = reduce_to_fixpoint(&g)?;
            let cost = match reduced.graph.channels().collect::<Vec<_>>().as_slice() {
                [only] => json!(only.cost),
                _ => Value::Null,
            };
            let mut report = json!({
                "cost": cost,
                "graph": graph_to_value(&reduced.graph),
                "steps": reduced.trace.steps.len(),
                "strategies": reduced.strategies,
                "terminal": reduced.trace.terminal,
            });
            if trace {
                report["trace"] = json!(reduced.trace.steps);
            }
            Ok(report)
        }
        Command::Route {
            graph,
            source,
            target,
            min_success,
            max_paths,
            max_bruteforce_edges,
        } => {
            let g = load_graph(&graph)?;
            let mut req = RouteRequest::new(&source, &target, probability("min-success", min_success)?);
            req.max_paths = max_paths;
            req.max_bruteforce_edges = max_bruteforce_edges;
            let result = route(&g, &req)?;
            if result.search == SearchKind::Infeasible {
                return Err(Failure {
                    exit: 2,
                    code: "infeasible",
                    message: format!("no strategy between {source:?} and {target:?} reaches success {min_success}"),
                    context: result.to_value(),
                });
            }
            Ok(result.to_value())
        }
        Command::Simulate {
            graph,
            strategy,
            source,
            target,
            min_success,
            samples,
            seed,
        } => {
            let g = load_graph(&graph)?;
            let tree = match strategy {
                Some(path) => serde_json::from_slice::<StrategyTree>(&read(&path)?).map_err(|e| {
                    Failure::invalid(
                        "invalid_strategy",
                        format!("{}: {e}", path.display()),
                        json!({ "path": path }),
                    )
                })?,
                None => routed_strategy(&g, source, target, min_success)?,
            };
            let analytic = evaluate_strategy(&tree, &g)?;
            let estimate = estimate(&tree, &g, samples, seed)?;
            Ok(json!({ "analytic": analytic, "estimate": estimate, "strategy": tree }))
        }
        Command::Grid {
            breadth,
            depth,
            fidelity,
            success,
            strategy,
            swap_success,
            purify_success,
            physical_acceptance,
        } => {
            let mut ops = OperationCosts::default();
            if let Some(p) = swap_success {
                ops.swap_success = probability("swap-success", p)?;
            }
            if let Some(p) = purify_success {
                ops.purify_success = probability("purify-success", p)?;
            }
            if let Some(a) = physical_acceptance {
                ops.physical_acceptance = a;
            }
            let spec = GridSpec {
                breadth,
                depth,
                channel_fidelity: Fidelity::new(fidelity).map_err(|e| {
                    Failure::invalid(
                        "invalid_arguments",
                        format!("--fidelity: {e}"),
                        json!({ "value": fidelity }),
                    )
                })?,
                channel_success: probability("success", success)?,
                strategy: match strategy {
                    GridOrder::PurifyThenSwap => GridStrategy::PurifyThenSwap,
                    GridOrder::SwapThenPurify => GridStrategy::SwapThenPurify,
                },
            };
            let cost = grid_cost(&spec, &ops).map_err(|e| Failure::invalid("invalid_arguments", e, Value::Null))?;
            Ok(json!({
                "breadth": breadth,
                "cost": cost,
                "depth": depth,
                "fidelity": spec.channel_fidelity,
                "op_costs": ops,
                "strategy": spec.strategy,
                "success": spec.channel_success,
            }))
        }
    }
}

fn routed_strategy(
    g: &NetworkGraph,
    source: Option<String>,
    target: Option<String>,
    min_success: Option<f64>,
) -> Result<StrategyTree, Failure> {
    let endpoints: Vec<&str> = g.node_ids().filter(|n| g.role(n) == Some(NodeRole::Endpoint)).collect();
    let (source, target) = match (source, target) {
        (Some(s), Some(t)) => (s, t),
        (None, None) if endpoints.len() == 2 => (endpoints[0].to_string(), endpoints[1].to_string()),
        _ => {
            return Err(Failure::invalid(
                "invalid_arguments",
                "give --strategy, or --source and --target unless the graph has exactly two endpoints",
                json!({ "endpoints": endpoints }),
            ))
        }
    };
    let threshold = match min_success {
        Some(p) => probability("min-success", p)?,
        None => SuccessProb::new(f64::MIN_POSITIVE).expect("positive and below one"),
    };
    let result = route(g, &RouteRequest::new(&source, &target, threshold))?;
    result.strategy.clone().ok_or_else(|| Failure {
        exit: 2,
        code: "infeasible",
        message: format!("no strategy between {source:?} and {target:?}"),
        context: result.to_value(),
    })
}
